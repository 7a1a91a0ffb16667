use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::protocol::{Handshake, Request, Response, VERSION};
use super::{sort_detections, Detection, Detector};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// One child detector process. Single caller; see [`ExternalDetector`] for a pool.
pub struct ExternalClient {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    name: String,
    next_id: u64,
}

impl ExternalClient {
    /// Starts `command` through `sh -c` and waits for its handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start `{command}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut client = Self {
            child,
            stdin,
            stdout,
            name: String::new(),
            next_id: 0,
        };
        let line = client.read_line()?;
        let hello: Handshake =
            serde_json::from_str(&line).map_err(|e| Error::Transport(format!("bad handshake `{line}`: {e}")))?;
        if hello.protocol != VERSION {
            return Err(Error::Transport(format!(
                "detector speaks protocol {}, expected {VERSION}",
                hello.protocol
            )));
        }
        client.name = hello.name;
        Ok(client)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Transport(format!("reading from detector: {e}")))?;
        if n == 0 {
            return Err(Error::Transport("detector closed its output".into()));
        }
        Ok(line.trim_end().to_owned())
    }

    pub fn detect(&mut self, image: &GrayImage) -> Result<Vec<Detection>> {
        let id = self.next_id;
        self.next_id += 1;
        let mut payload = serde_json::to_string(&Request::new(id, image)).expect("request serializes");
        payload.push('\n');
        self.stdin
            .write_all(payload.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Transport(format!("writing to detector: {e}")))?;

        let line = self.read_line()?;
        let reply: Response =
            serde_json::from_str(&line).map_err(|e| Error::Transport(format!("malformed reply `{line}`: {e}")))?;
        if reply.id != Some(id) {
            return Err(Error::Transport(format!(
                "reply id {:?} does not match request id {id}: `{line}`",
                reply.id
            )));
        }
        if let Some(err) = reply.error {
            return Err(Error::Transport(format!("detector error for request {id}: {err}")));
        }
        let mut dets: Vec<Detection> = reply
            .detections
            .ok_or_else(|| Error::Transport(format!("reply without detections: `{line}`")))?
            .into_iter()
            .map(Detection::from)
            .collect();
        if let Some(bad) = dets
            .iter()
            .find(|d| !(0.0..=1.0).contains(&d.score) || !d.bbox.is_valid())
        {
            return Err(Error::Transport(format!("invalid detection {bad:?} in `{line}`")));
        }
        sort_detections(&mut dets);
        Ok(dets)
    }
}

impl Drop for ExternalClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A fixed pool of child processes behind the [`Detector`] trait.
pub struct ExternalDetector {
    name: String,
    clients: Vec<Mutex<ExternalClient>>,
    next: AtomicUsize,
}

impl ExternalDetector {
    pub fn spawn(command: &str, pool_size: usize) -> Result<Self> {
        let clients = (0..pool_size.max(1))
            .map(|_| ExternalClient::spawn(command).map(Mutex::new))
            .collect::<Result<Vec<_>>>()?;
        let name = clients[0].lock().expect("fresh mutex").name().to_owned();
        Ok(Self {
            name,
            clients,
            next: AtomicUsize::new(0),
        })
    }
}

impl Detector for ExternalDetector {
    fn id(&self) -> &str {
        &self.name
    }

    fn detect(&self, image: &GrayImage) -> Result<Vec<Detection>> {
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        let n = self.clients.len();
        for k in 0..n {
            if let Ok(mut client) = self.clients[(start + k) % n].try_lock() {
                return client.detect(image);
            }
        }
        let mut client = self.clients[start % n]
            .lock()
            .map_err(|_| Error::Transport("detector client poisoned".into()))?;
        client.detect(image)
    }
}
