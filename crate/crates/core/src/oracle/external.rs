//! Line-delimited JSON oracle protocol.
//!
//! Request:  `{"id":u64,"rows":[[f64,…],…]}` followed by a newline.
//! Reply:    `{"id":u64,"probs":[[f64,…],…]}` followed by a newline.
//!
//! One request is in flight at a time; replies must echo the request id.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Matrix;

use super::{validate_reply, Oracle};

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Reply {
    pub id: u64,
    #[serde(default)]
    pub probs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// Oracle backed by a child process speaking the line protocol.
pub struct ExternalOracle {
    command: String,
    class_count: usize,
    timeout: Duration,
    channel: Mutex<Channel>,
}

impl ExternalOracle {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str, class_count: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::OracleIo(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalOracle {
            command: command.to_string(),
            class_count,
            timeout,
            channel: Mutex::new(Channel {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn round_trip(&self, rows: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::OracleIo("oracle channel poisoned".into()))?;
        let id = ch.next_id;
        ch.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, rows })?;
        line.push('\n');
        if let Err(e) = ch.stdin.write_all(line.as_bytes()).and_then(|_| ch.stdin.flush()) {
            let status = ch.child.try_wait().ok().flatten();
            return Err(Error::OracleIo(format!(
                "writing request {id} to {:?} failed: {e} (exit status {status:?})",
                self.command
            )));
        }
        let reply = match ch.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                return Err(Error::OracleIo(format!("reading reply {id}: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::OracleIo(format!(
                    "no reply to request {id} within {:?}",
                    self.timeout
                )));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = ch.child.wait().ok();
                return Err(Error::OracleIo(format!(
                    "{:?} closed its output before replying to request {id} (exit status {status:?})",
                    self.command
                )));
            }
        };
        let reply: Reply = serde_json::from_str(&reply).map_err(|e| {
            let shown: String = reply.chars().take(120).collect();
            Error::OracleIo(format!("malformed reply to request {id}: {e}: {shown:?}"))
        })?;
        if let Some(msg) = reply.error {
            return Err(Error::OracleIo(format!("oracle reported: {msg}")));
        }
        if reply.id != id {
            return Err(Error::OracleIo(format!(
                "reply id {} does not match request id {id}",
                reply.id
            )));
        }
        Ok(reply.probs)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl<T: Scalar> Oracle<T> for ExternalOracle {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        let k = self.class_count;
        if rows.is_empty() {
            return Ok(Matrix::new(k));
        }
        let request: Vec<Vec<f64>> = rows
            .rows()
            .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        let probs = self.round_trip(request)?;
        let mut out = Matrix::with_capacity(k, probs.len());
        for (i, r) in probs.iter().enumerate() {
            let row: Vec<T> = r.iter().map(|v| T::lit(*v)).collect();
            out.push_row(&row)
                .map_err(|_| Error::OracleIo(format!("reply row {i} has {} entries, expected {k}", r.len())))?;
        }
        validate_reply(rows.nrows(), k, &out)?;
        Ok(out)
    }
}

/// Answers protocol requests from `input` with `oracle` until end of input.
/// Malformed requests get an error reply; the loop keeps going.
pub fn serve<T, O>(oracle: &O, input: impl BufRead, mut output: impl Write) -> Result<()>
where
    T: Scalar,
    O: Oracle<T> + ?Sized,
{
    let k = oracle.class_count();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => Reply {
                id: 0,
                probs: Vec::new(),
                error: Some(format!("malformed request: {e}")),
            },
            Ok(req) => {
                let width = req.rows.first().map_or(0, Vec::len);
                let flat: Vec<T> = req.rows.iter().flatten().map(|v| T::lit(*v)).collect();
                let result = if req.rows.is_empty() {
                    Ok(Matrix::new(k))
                } else {
                    Matrix::from_flat(width, flat)
                        .and_then(|m| {
                            if m.nrows() != req.rows.len() {
                                Err(Error::Data("ragged rows".into()))
                            } else {
                                Ok(m)
                            }
                        })
                        .and_then(|m| oracle.predict_proba(&m))
                };
                match result {
                    Ok(p) => Reply {
                        id: req.id,
                        probs: p
                            .rows()
                            .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                            .collect(),
                        error: None,
                    },
                    Err(e) => Reply {
                        id: req.id,
                        probs: Vec::new(),
                        error: Some(e.to_string()),
                    },
                }
            }
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
