//! Newline-delimited JSON protocol for out-of-process generators.
//!
//! Each request is one JSON object on its own line:
//!
//! ```text
//! {"op":"step","prompt":"...","image_b64":"...","prefix":[3,17]}
//! {"op":"step_hidden","prompt":"...","prefix":[3,17],"layer":12}
//! {"op":"resume","hidden":[...],"layer":12}
//! ```
//!
//! and each response is `{"probs":[...]}`, `{"hidden":[...]}` or
//! `{"error":"..."}`. Images travel as base64-encoded PNG. The client speaks
//! the protocol over TCP (`tcp://host:port`) or over the stdin/stdout pipes
//! of a spawned process (`exec:<command line>`); [`serve`] exposes any
//! in-process [`Generator`] the same way.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{check_layer, Capabilities, Generator};
use crate::error::{Error, Result};
use crate::types::{decode_image_b64, encode_png_b64, validate_distribution, AugmentedInput, TokenDistribution, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Step,
    StepHidden,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub op: Op,
    #[serde(default)]
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    #[serde(default)]
    pub prefix: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    /// Only for `resume`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Static description of the remote model; the protocol itself carries no metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// `tcp://host:port` or `exec:<command line>`.
    pub endpoint: String,
    /// JSON array of token strings.
    pub vocab_path: PathBuf,
    pub eos: String,
    #[serde(default = "one")]
    pub num_layers: usize,
    #[serde(default)]
    pub hidden_states: bool,
    #[serde(default = "default_limit")]
    pub context_limit: usize,
}

fn one() -> usize {
    1
}

fn default_limit() -> usize {
    4096
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct RemoteGenerator {
    conn: Mutex<Connection>,
    vocab: Vec<String>,
    eos: Option<TokenId>,
    num_layers: usize,
    hidden_states: bool,
    context_limit: usize,
    image_cache: Mutex<HashMap<u64, Arc<String>>>,
}

impl RemoteGenerator {
    pub fn connect(cfg: &RemoteConfig) -> Result<Self> {
        let text = std::fs::read_to_string(&cfg.vocab_path)
            .map_err(|e| Error::ModelUnavailable(format!("{}: {e}", cfg.vocab_path.display())))?;
        let vocab: Vec<String> = serde_json::from_str(&text)?;
        let conn = open(&cfg.endpoint)?;
        let mut g = Self::from_parts(conn, vocab, cfg.num_layers, cfg.hidden_states, cfg.context_limit);
        g.eos = g.vocab.iter().position(|t| *t == cfg.eos).map(|i| i as TokenId);
        if g.eos.is_none() {
            return Err(Error::InvalidConfig(format!("EOS `{}` not in remote vocabulary", cfg.eos)));
        }
        Ok(g)
    }

    /// Client over an already-open byte stream pair.
    pub fn over_streams(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        vocab: Vec<String>,
        eos: Option<TokenId>,
        num_layers: usize,
        hidden_states: bool,
    ) -> Self {
        let conn = Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
        };
        let mut g = Self::from_parts(conn, vocab, num_layers, hidden_states, default_limit());
        g.eos = eos;
        g
    }

    fn from_parts(
        conn: Connection,
        vocab: Vec<String>,
        num_layers: usize,
        hidden_states: bool,
        context_limit: usize,
    ) -> Self {
        Self {
            conn: Mutex::new(conn),
            vocab,
            eos: None,
            num_layers: num_layers.max(1),
            hidden_states,
            context_limit,
            image_cache: Mutex::new(HashMap::new()),
        }
    }

    fn image_b64(&self, input: &AugmentedInput) -> Result<Option<String>> {
        let Some(img) = input.image() else {
            return Ok(None);
        };
        let mut cache = self.image_cache.lock().expect("image cache poisoned");
        if let Some(s) = cache.get(&input.image_fingerprint()) {
            return Ok(Some(s.as_str().to_owned()));
        }
        let encoded = Arc::new(encode_png_b64(img)?);
        cache.insert(input.image_fingerprint(), encoded.clone());
        Ok(Some(encoded.as_str().to_owned()))
    }

    fn call(&self, req: &Request) -> Result<Response> {
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        let mut conn = self.conn.lock().expect("remote connection poisoned");
        let unavailable = |e: std::io::Error| Error::RemoteUnavailable(e.to_string());
        conn.writer.write_all(line.as_bytes()).map_err(unavailable)?;
        conn.writer.flush().map_err(unavailable)?;
        let mut reply = String::new();
        let n = conn.reader.read_line(&mut reply).map_err(unavailable)?;
        if n == 0 {
            return Err(Error::RemoteUnavailable("connection closed".into()));
        }
        let resp: Response = serde_json::from_str(reply.trim_end())?;
        if let Some(err) = resp.error {
            return Err(Error::RemoteError(err));
        }
        Ok(resp)
    }

    fn probs(&self, resp: Response) -> Result<TokenDistribution> {
        let probs = resp
            .probs
            .ok_or_else(|| Error::RemoteError("response lacks `probs`".into()))?;
        if probs.len() != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                actual: probs.len(),
            });
        }
        validate_distribution(probs)
    }
}

fn open(endpoint: &str) -> Result<Connection> {
    if let Some(addr) = endpoint.strip_prefix("tcp://") {
        let stream = TcpStream::connect(addr).map_err(|e| Error::RemoteUnavailable(format!("{addr}: {e}")))?;
        stream.set_nodelay(true).ok();
        let writer = stream.try_clone()?;
        Ok(Connection {
            reader: Box::new(BufReader::new(stream)),
            writer: Box::new(writer),
            child: None,
        })
    } else if let Some(cmd) = endpoint.strip_prefix("exec:") {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty exec endpoint".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::RemoteUnavailable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Connection {
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
        })
    } else {
        Err(Error::InvalidConfig(format!(
            "endpoint `{endpoint}` must start with tcp:// or exec:"
        )))
    }
}

impl Generator for RemoteGenerator {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn num_layers(&self) -> usize {
        self.num_layers
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            hidden_states: self.hidden_states,
            trainable: false,
        }
    }

    fn context_limit(&self) -> usize {
        self.context_limit
    }

    fn eos_token(&self) -> Option<TokenId> {
        self.eos
    }

    fn step(&self, input: &AugmentedInput, prefix: &[TokenId]) -> Result<TokenDistribution> {
        if prefix.len() >= self.context_limit {
            return Err(Error::ContextOverflow {
                len: prefix.len(),
                limit: self.context_limit,
            });
        }
        let resp = self.call(&Request {
            op: Op::Step,
            prompt: input.prompt().to_owned(),
            image_b64: self.image_b64(input)?,
            prefix: prefix.to_vec(),
            layer: None,
            hidden: None,
        })?;
        self.probs(resp)
    }

    fn step_hidden(&self, input: &AugmentedInput, prefix: &[TokenId], layer: usize) -> Result<Vec<f64>> {
        if !self.hidden_states {
            return Err(Error::UnsupportedCapability("hidden_states"));
        }
        check_layer(layer, self.num_layers)?;
        let resp = self.call(&Request {
            op: Op::StepHidden,
            prompt: input.prompt().to_owned(),
            image_b64: self.image_b64(input)?,
            prefix: prefix.to_vec(),
            layer: Some(layer),
            hidden: None,
        })?;
        resp.hidden
            .ok_or_else(|| Error::RemoteError("response lacks `hidden`".into()))
    }

    fn resume_from_hidden(&self, hidden: &[f64], layer: usize) -> Result<TokenDistribution> {
        if !self.hidden_states {
            return Err(Error::UnsupportedCapability("hidden_states"));
        }
        check_layer(layer, self.num_layers)?;
        let resp = self.call(&Request {
            op: Op::Resume,
            prompt: String::new(),
            image_b64: None,
            prefix: Vec::new(),
            layer: Some(layer),
            hidden: Some(hidden.to_vec()),
        })?;
        self.probs(resp)
    }
}

fn handle<G: Generator + ?Sized>(g: &G, req: Request) -> Result<Response> {
    let image = req.image_b64.as_deref().map(decode_image_b64).transpose()?;
    let mut resp = Response::default();
    match req.op {
        Op::Step => {
            let input = AugmentedInput::new("", 0, req.prompt, image.map(Arc::new))?;
            resp.probs = Some(g.step(&input, &req.prefix)?.into_inner());
        }
        Op::StepHidden => {
            let layer = req.layer.ok_or_else(|| Error::invalid("step_hidden needs `layer`"))?;
            let input = AugmentedInput::new("", 0, req.prompt, image.map(Arc::new))?;
            resp.hidden = Some(g.step_hidden(&input, &req.prefix, layer)?);
        }
        Op::Resume => {
            let layer = req.layer.ok_or_else(|| Error::invalid("resume needs `layer`"))?;
            let hidden = req.hidden.ok_or_else(|| Error::invalid("resume needs `hidden`"))?;
            resp.probs = Some(g.resume_from_hidden(&hidden, layer)?.into_inner());
        }
    }
    Ok(resp)
}

/// Answers protocol requests from `reader` until end of input.
pub fn serve<G: Generator + ?Sized>(g: &G, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = serde_json::from_str::<Request>(&line)
            .map_err(Error::from)
            .and_then(|req| handle(g, req))
            .unwrap_or_else(|e| Response {
                error: Some(e.to_string()),
                ..Default::default()
            });
        // One write per response keeps small replies out of Nagle's way.
        let mut line = serde_json::to_vec(&resp)?;
        line.push(b'\n');
        writer.write_all(&line)?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves `max_connections` TCP clients one after another.
pub fn serve_tcp<G: Generator + ?Sized>(g: &G, listener: &TcpListener, max_connections: usize) -> Result<()> {
    for stream in listener.incoming().take(max_connections) {
        let stream = stream?;
        stream.set_nodelay(true).ok();
        let writer = stream.try_clone()?;
        serve(g, BufReader::new(stream), writer)?;
    }
    Ok(())
}
