//! Long-running service: watched-directory and wire intakes feed a bounded
//! worker pool; a single writer appends verdict lines to the log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use binsight::data::EncodingMode;

use crate::classify::Classifier;
use crate::verdict::Verdict;
use crate::wire;
use crate::{GatewayError, Result};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model_path: PathBuf,
    pub mode: Option<EncodingMode>,
    pub watch_dir: Option<PathBuf>,
    pub listen: Option<String>,
    pub log_path: PathBuf,
    pub threshold: f64,
    pub workers: usize,
    pub max_bytes: usize,
    pub poll_interval: Duration,
}

impl GatewayConfig {
    pub fn new(model_path: impl Into<PathBuf>, log_path: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            model_path: model_path.into(),
            mode: None,
            watch_dir: None,
            listen: None,
            log_path: log_path.into(),
            threshold: 0.5,
            workers: 4,
            max_bytes: wire::DEFAULT_MAX_BYTES,
            poll_interval: Duration::from_millis(250),
        }
    }
}

enum Job {
    /// Bytes read from a completed watched file (or the read error).
    File {
        id: u64,
        source: String,
        bytes: std::result::Result<Vec<u8>, String>,
    },
    /// An accepted connection; the worker reads the request and responds.
    Wire { id: u64, stream: TcpStream },
}

/// Handle to a running gateway. Dropping it shuts the service down.
pub struct Gateway {
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    /// Bound address of the wire listener, when enabled.
    pub local_addr: Option<SocketAddr>,
}

impl Gateway {
    /// Signal shutdown, drain in-flight work, and join all threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Start the gateway: load the model once, bind intakes, spawn the worker
/// pool and log writer. Returns a handle; work proceeds on background
/// threads until shutdown.
pub fn serve(config: GatewayConfig) -> Result<Gateway> {
    if config.watch_dir.is_none() && config.listen.is_none() {
        return Err(GatewayError::Config(
            "serve requires at least one intake (watch dir or listen address)".into(),
        ));
    }
    if config.workers == 0 {
        return Err(GatewayError::Config("need at least one worker".into()));
    }
    let classifier = Arc::new(Classifier::load(
        &config.model_path,
        config.mode,
        config.threshold,
    )?);

    let stop = Arc::new(AtomicBool::new(false));
    let next_id = Arc::new(AtomicU64::new(1));
    let (job_tx, job_rx) = channel::<Job>();
    let job_rx = Arc::new(Mutex::new(job_rx));
    let (verdict_tx, verdict_rx) = channel::<Verdict>();

    let mut threads = Vec::new();

    let log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&config.log_path)?;
    threads.push(spawn_log_writer(log_file, verdict_rx));

    for _ in 0..config.workers {
        threads.push(spawn_worker(
            Arc::clone(&classifier),
            Arc::clone(&job_rx),
            verdict_tx.clone(),
            config.max_bytes,
        ));
    }
    drop(verdict_tx);

    let mut local_addr = None;
    if let Some(addr) = &config.listen {
        let listener = TcpListener::bind(addr)?;
        local_addr = Some(listener.local_addr()?);
        listener.set_nonblocking(true)?;
        threads.push(spawn_listener(
            listener,
            job_tx.clone(),
            Arc::clone(&stop),
            Arc::clone(&next_id),
        ));
    }
    if let Some(dir) = &config.watch_dir {
        if !dir.is_dir() {
            return Err(GatewayError::Config(format!(
                "watch directory {} does not exist",
                dir.display()
            )));
        }
        threads.push(spawn_watcher(
            dir.clone(),
            config.poll_interval,
            job_tx.clone(),
            Arc::clone(&stop),
            Arc::clone(&next_id),
        ));
    }
    drop(job_tx);

    Ok(Gateway {
        stop,
        threads,
        local_addr,
    })
}

fn spawn_log_writer(mut file: File, rx: Receiver<Verdict>) -> JoinHandle<()> {
    std::thread::spawn(move || {
        while let Ok(verdict) = rx.recv() {
            let mut line = verdict.to_line();
            line.push('\n');
            if file.write_all(line.as_bytes()).is_ok() {
                let _ = file.flush();
            }
        }
    })
}

fn spawn_worker(
    classifier: Arc<Classifier>,
    jobs: Arc<Mutex<Receiver<Job>>>,
    verdicts: Sender<Verdict>,
    max_bytes: usize,
) -> JoinHandle<()> {
    std::thread::spawn(move || loop {
        let job = match jobs.lock().unwrap().recv() {
            Ok(j) => j,
            Err(_) => return, // intakes gone and queue drained
        };
        let verdict = match job {
            Job::File { id, source, bytes } => match bytes {
                Ok(bytes) => classifier.classify_bytes(id, &source, &bytes),
                Err(reason) => Verdict::error(id, &source, &reason),
            },
            Job::Wire { id, mut stream } => {
                let peer = stream
                    .peer_addr()
                    .map(|a| a.to_string())
                    .unwrap_or_else(|_| "unknown-peer".into());
                let verdict = match wire::read_request(&mut stream, max_bytes) {
                    Ok(payload) => classifier.classify_bytes(id, &peer, &payload),
                    Err(e) => Verdict::error(id, &peer, &e.to_string()),
                };
                let _ = wire::write_response(&mut stream, &verdict);
                verdict
            }
        };
        if verdicts.send(verdict).is_err() {
            return;
        }
    })
}

fn spawn_listener(
    listener: TcpListener,
    jobs: Sender<Job>,
    stop: Arc<AtomicBool>,
    next_id: Arc<AtomicU64>,
) -> JoinHandle<()> {
    std::thread::spawn(move || {
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let id = next_id.fetch_add(1, Ordering::SeqCst);
                    if jobs.send(Job::Wire { id, stream }).is_err() {
                        return;
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(_) => std::thread::sleep(Duration::from_millis(20)),
            }
        }
    })
}

fn spawn_watcher(
    dir: PathBuf,
    poll_interval: Duration,
    jobs: Sender<Job>,
    stop: Arc<AtomicBool>,
    next_id: Arc<AtomicU64>,
) -> JoinHandle<()> {
    std::thread::spawn(move || {
        // path -> size at last poll; a file is submitted once its size is
        // stable across two polls.
        let mut pending: HashMap<PathBuf, u64> = HashMap::new();
        let mut processed: std::collections::HashSet<PathBuf> = Default::default();
        while !stop.load(Ordering::SeqCst) {
            if let Ok(read_dir) = std::fs::read_dir(&dir) {
                for entry in read_dir.flatten() {
                    let path = entry.path();
                    if !path.is_file() || processed.contains(&path) {
                        continue;
                    }
                    let size = match entry.metadata() {
                        Ok(m) => m.len(),
                        Err(_) => continue,
                    };
                    match pending.get(&path) {
                        Some(&prev) if prev == size => {
                            pending.remove(&path);
                            processed.insert(path.clone());
                            let id = next_id.fetch_add(1, Ordering::SeqCst);
                            let bytes = std::fs::read(&path).map_err(|e| e.to_string());
                            let job = Job::File {
                                id,
                                source: path.display().to_string(),
                                bytes,
                            };
                            if jobs.send(job).is_err() {
                                return;
                            }
                        }
                        _ => {
                            pending.insert(path, size);
                        }
                    }
                }
            }
            std::thread::sleep(poll_interval);
        }
    })
}

/// Read all verdict lines from a log file.
pub fn read_verdict_log(path: &Path) -> Result<Vec<Verdict>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|l| {
            serde_json::from_str(l).map_err(|e| GatewayError::Wire(format!("bad log line: {e}")))
        })
        .collect()
}
