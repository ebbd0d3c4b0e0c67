//! Query interface to the model being explained.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),
    #[error("model `{name}` requires d = {required}, got {got}")]
    BadDimension {
        name: String,
        required: usize,
        got: usize,
    },
    #[error("input has {got} coordinates, model expects {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("non-finite input coordinate")]
    NonFiniteInput,
    #[error("adapter command is empty")]
    EmptyCommand,
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed adapter response: {0}")]
    Malformed(String),
    #[error("adapter exited mid-session")]
    ChildExited,
    #[error("adapter reported: {0}")]
    Adapter(String),
    #[error("adapter i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// The prediction model `f_p`. One real output per input vector.
pub trait BlackBoxModel {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError>;
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
}

impl<M: BlackBoxModel + ?Sized> BlackBoxModel for Box<M> {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).predict(x)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<M: BlackBoxModel + ?Sized> BlackBoxModel for &mut M {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).predict(x)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// `(6x - 2) sin(12x - 4)`, the one-dimensional demo objective on `[0, 1]`.
pub fn forrester(x: f64) -> f64 {
    (6.0 * x - 2.0) * (12.0 * x - 4.0).sin()
}

/// The usual Forrester benchmark `(6x - 2)^2 sin(12x - 4)`.
pub fn forrester_squared(x: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

/// Deterministic analytic models used for demos and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Builtin {
    Forrester,
    ForresterSquared,
    Sphere {
        d: usize,
    },
    Linear {
        coefficients: Vec<f64>,
        intercept: f64,
    },
    LogisticSynthetic {
        weights: Vec<f64>,
    },
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "forrester",
    "forrester-squared",
    "sphere",
    "linear",
    "logistic-synthetic",
];

/// Build a named builtin. `linear` draws coefficients and intercept from
/// N(0, 1); `logistic-synthetic` draws weights from N(0, 1/d) so that
/// `w^T x` has unit variance for standardized inputs.
pub fn builtin_model(name: &str, d: usize, seed: u64) -> Result<Builtin, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let check_d = |required: usize| {
        if d == required {
            Ok(())
        } else {
            Err(ModelError::BadDimension {
                name: name.to_string(),
                required,
                got: d,
            })
        }
    };
    match name {
        "forrester" => check_d(1).map(|_| Builtin::Forrester),
        "forrester-squared" => check_d(1).map(|_| Builtin::ForresterSquared),
        _ if d == 0 => Err(ModelError::BadDimension {
            name: name.to_string(),
            required: 1,
            got: 0,
        }),
        "sphere" => Ok(Builtin::Sphere { d }),
        "linear" => {
            let coefficients = (0..d).map(|_| normal()).collect();
            let intercept = normal();
            Ok(Builtin::Linear {
                coefficients,
                intercept,
            })
        }
        "logistic-synthetic" => {
            let scale = 1.0 / (d as f64).sqrt();
            Ok(Builtin::LogisticSynthetic {
                weights: (0..d).map(|_| scale * normal()).collect(),
            })
        }
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

impl Builtin {
    /// Scale of the region the builtin is meant to be explored over: for
    /// the Forrester variants this makes `x0 ± scale` cover `[0, 1]` when
    /// `x0 = 0.5`; the others expect standardized inputs.
    pub fn natural_scale(&self) -> f64 {
        match self {
            Builtin::Forrester | Builtin::ForresterSquared => 0.5,
            _ => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Builtin::Forrester => forrester(x[0]),
            Builtin::ForresterSquared => forrester_squared(x[0]),
            Builtin::Sphere { .. } => x.iter().map(|v| v * v).sum(),
            Builtin::Linear {
                coefficients,
                intercept,
            } => intercept + dot(coefficients, x),
            Builtin::LogisticSynthetic { weights } => sigmoid(dot(weights, x)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl BlackBoxModel for Builtin {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        check_input(x, self.dim())?;
        Ok(self.eval(x))
    }

    fn dim(&self) -> usize {
        match self {
            Builtin::Forrester | Builtin::ForresterSquared => 1,
            Builtin::Sphere { d } => *d,
            Builtin::Linear { coefficients, .. } => coefficients.len(),
            Builtin::LogisticSynthetic { weights } => weights.len(),
        }
    }

    fn name(&self) -> &str {
        match self {
            Builtin::Forrester => "forrester",
            Builtin::ForresterSquared => "forrester-squared",
            Builtin::Sphere { .. } => "sphere",
            Builtin::Linear { .. } => "linear",
            Builtin::LogisticSynthetic { .. } => "logistic-synthetic",
        }
    }
}

fn check_input(x: &[f64], d: usize) -> Result<(), ModelError> {
    if x.len() != d {
        return Err(ModelError::InputDimension {
            expected: d,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    Ok(())
}

/// Wraps a model and counts `predict` calls.
#[derive(Debug)]
pub struct Counted<M> {
    inner: M,
    calls: usize,
}

impl<M: BlackBoxModel> Counted<M> {
    pub fn new(inner: M) -> Self {
        Counted { inner, calls: 0 }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: BlackBoxModel> BlackBoxModel for Counted<M> {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        self.calls += 1;
        self.inner.predict(x)
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessModelConfig {
    pub command: Vec<String>,
    pub startup_timeout: Duration,
    pub per_query_timeout: Duration,
}

impl SubprocessModelConfig {
    pub fn new(command: Vec<String>) -> Self {
        SubprocessModelConfig {
            command,
            startup_timeout: Duration::from_secs(60),
            per_query_timeout: Duration::from_secs(30),
        }
    }
}

/// A model served by a child process over the JSON-lines stdio protocol.
///
/// Requests are `{"id": n, "x": [...]}` and answers `{"id": n, "y": v}` or
/// `{"id": n, "error": "..."}`. The session opens with a `hello` handshake
/// that reports the model dimension and closes with `bye`.
pub struct SubprocessModel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    d: usize,
    name: String,
    per_query_timeout: Duration,
    broken: bool,
}

impl std::fmt::Debug for SubprocessModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessModel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("pid", &self.child.id())
            .finish()
    }
}

#[derive(Deserialize)]
struct Hello {
    op: String,
    d: usize,
    name: String,
}

pub fn subprocess_model(cfg: &SubprocessModelConfig) -> Result<SubprocessModel, ModelError> {
    let (program, args) = cfg.command.split_first().ok_or(ModelError::EmptyCommand)?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| ModelError::Spawn {
            command: cfg.command.join(" "),
            source,
        })?;
    let stdout = child.stdout.take().expect("piped stdout");
    let stdin = child.stdin.take();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let mut model = SubprocessModel {
        child,
        stdin,
        lines: rx,
        next_id: 0,
        d: 0,
        name: String::new(),
        per_query_timeout: cfg.per_query_timeout,
        broken: false,
    };
    model.send(&json!({"op": "hello"}))?;
    let line = model.recv(cfg.startup_timeout)?;
    let hello: Hello = serde_json::from_str(&line)
        .map_err(|e| ModelError::Malformed(format!("bad hello `{line}`: {e}")))?;
    if hello.op != "hello" {
        return Err(ModelError::Malformed(format!(
            "expected hello, got `{line}`"
        )));
    }
    model.d = hello.d;
    model.name = hello.name;
    log::debug!("adapter `{}` ready, d = {}", model.name, model.d);
    Ok(model)
}

impl SubprocessModel {
    fn send(&mut self, msg: &Value) -> Result<(), ModelError> {
        let stdin = self.stdin.as_mut().ok_or(ModelError::ChildExited)?;
        let mut line = serde_json::to_string(msg).expect("json value serializes");
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::BrokenPipe => ModelError::ChildExited,
                _ => ModelError::Io(e),
            })
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ModelError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ModelError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(ModelError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ModelError::ChildExited),
        }
    }

    fn query(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&json!({"id": id, "x": x}))?;
        let line = self.recv(self.per_query_timeout)?;
        let resp: Value = serde_json::from_str(&line)
            .map_err(|e| ModelError::Malformed(format!("`{line}`: {e}")))?;
        if resp.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(ModelError::Malformed(format!(
                "expected id {id} in `{line}`"
            )));
        }
        if let Some(msg) = resp.get("error") {
            return Err(ModelError::Adapter(
                msg.as_str()
                    .map(str::to_string)
                    .unwrap_or_else(|| msg.to_string()),
            ));
        }
        match resp.get("y").and_then(Value::as_f64) {
            Some(y) if y.is_finite() => Ok(y),
            _ => Err(ModelError::Malformed(format!(
                "missing finite `y` in `{line}`"
            ))),
        }
    }

    /// Send `bye`, close stdin and reap the child.
    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if self.stdin.is_some() && !self.broken {
            let _ = self.send(&json!({"op": "bye"}));
        }
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(10))
                }
                _ => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl BlackBoxModel for SubprocessModel {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        if self.broken {
            return Err(ModelError::ChildExited);
        }
        check_input(x, self.d)?;
        let out = self.query(x);
        if matches!(
            out,
            Err(ModelError::Timeout(_))
                | Err(ModelError::ChildExited)
                | Err(ModelError::Malformed(_))
        ) {
            // the stream is out of sync or gone; nothing after this is trustworthy
            self.broken = true;
            let _ = self.child.kill();
        }
        out
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn name(&self) -> &str {
        &self.name
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        self.shutdown();
    }
}
