//! Long-running node roles: perception client, relay, and prediction
//! server, glued together by the framed wire protocol.

use super::link::{FrameReader, FrameWriter, LinkShim};
use super::{
    mono_us, CommError, FeaturesPayload, HelloPayload, LinguisticPayload, Message,
    Payload, PredictionPayload, LINGUISTIC_SCHEMA_VERSION,
};
use crate::inference::{
    fixture_likelihoods, posterior, InferenceError, LikelihoodModel, LookupTable, Prediction,
};
use crate::semantics::{categorize, NumericFeatures, Ontology, Thresholds};
use serde::{Deserialize, Serialize};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

/// Direct V2V or relay-mediated feature path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Direct,
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    PerceptionClient,
    Relay,
    PredictionServer,
}

/// Where the prediction server gets its predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSource {
    /// Compile the shipped fixture likelihoods into a lookup table at startup.
    FixtureTable,
    /// Run the Bayesian engine live per query, no table.
    FixtureLive,
    /// Load a previously built binary snapshot.
    Snapshot(PathBuf),
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub role: NodeRole,
    pub listen: Option<SocketAddr>,
    pub peer: Option<SocketAddr>,
    /// Injected delay applied to every send of this node (tests only).
    pub inject_delay: Duration,
    /// Drop probability applied to every send of this node (tests only).
    pub drop_prob: f64,
    pub ontology: Ontology,
    pub thresholds: Option<Thresholds>,
    pub predictor: PredictorSource,
    /// Poll interval for shutdown checks on blocking reads.
    pub read_timeout: Duration,
    pub shim_seed: u64,
}

impl NodeConfig {
    pub fn new(role: NodeRole, ontology: Ontology) -> Self {
        NodeConfig {
            role,
            listen: None,
            peer: None,
            inject_delay: Duration::ZERO,
            drop_prob: 0.0,
            ontology,
            thresholds: None,
            predictor: PredictorSource::FixtureTable,
            read_timeout: Duration::from_millis(100),
            shim_seed: 0,
        }
    }
}

/// Running node: threads polling a shared shutdown flag, plus the counters
/// tests read.
pub struct NodeHandle {
    pub local_addr: Option<SocketAddr>,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    /// Malformed or undeliverable messages swallowed without crashing.
    pub faults: Arc<AtomicU64>,
    /// Messages forwarded (relay) or answered (server).
    pub processed: Arc<AtomicU64>,
    /// Prediction server only: one-way origin→server latencies (ms).
    pub one_way_ms: Arc<Mutex<Vec<f64>>>,
}

impl NodeHandle {
    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
        let workers = std::mem::take(&mut *self.workers.lock().expect("workers lock"));
        for w in workers {
            let _ = w.join();
        }
    }
}

enum Predictor {
    Table(LookupTable),
    Live(LikelihoodModel),
}

impl Predictor {
    fn predict(&self, labels: &[String], ontology: &Ontology) -> Result<Prediction, InferenceError> {
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let frame = ontology.frame_from_labels(&refs)?;
        match self {
            Predictor::Table(table) => table.query_hash(&frame, ontology),
            Predictor::Live(model) => {
                let p = posterior(&frame, model)?;
                Ok(Prediction {
                    maneuver: p.argmax,
                    posterior: p.probs,
                })
            }
        }
    }
}

fn build_predictor(config: &NodeConfig) -> Result<Predictor, CommError> {
    let as_comm = |e: InferenceError| CommError::Input(e.to_string());
    match &config.predictor {
        PredictorSource::FixtureTable => {
            let (_, model) = fixture_likelihoods(&config.ontology).map_err(as_comm)?;
            let rules = crate::inference::edge_lane_rules(&config.ontology);
            let table = LookupTable::build(&config.ontology, &rules, |f| posterior(f, &model))
                .map_err(as_comm)?;
            Ok(Predictor::Table(table))
        }
        PredictorSource::FixtureLive => {
            let (_, model) = fixture_likelihoods(&config.ontology).map_err(as_comm)?;
            Ok(Predictor::Live(model))
        }
        PredictorSource::Snapshot(path) => {
            let file = std::fs::File::open(path).map_err(|e| CommError::Io(e.to_string()))?;
            let table =
                LookupTable::load_snapshot(std::io::BufReader::new(file), &config.ontology)
                    .map_err(as_comm)?;
            Ok(Predictor::Table(table))
        }
    }
}

/// Converts one FEATURES message into the fixed LINGUISTIC payload,
/// stamping the relay ingress/egress times for latency accounting.
pub fn relay_process(
    msg: &Message,
    ingress_ts_us: u64,
    thresholds: &Thresholds,
    ontology: &Ontology,
) -> Result<LinguisticPayload, CommError> {
    let features = match &msg.payload {
        Payload::Features(f) => f,
        other => {
            return Err(CommError::Decode(format!(
                "relay expected FEATURES, got {:?}",
                other.message_type()
            )))
        }
    };
    let numeric = features.numeric()?;
    let frame = categorize(&numeric, thresholds, ontology)
        .map_err(|e| CommError::Decode(e.to_string()))?;
    let labels = frame
        .labels(ontology)
        .into_iter()
        .map(|s| s.to_string())
        .collect();
    Ok(LinguisticPayload {
        schema_version: LINGUISTIC_SCHEMA_VERSION,
        labels,
        origin_seq: msg.seq,
        origin_ts_us: features.sent_ts_us,
        relay_ingress_ts_us: ingress_ts_us,
        relay_egress_ts_us: mono_us(),
    })
}

/// Bounded exponential backoff reconnect.
pub fn connect_with_backoff(
    addr: SocketAddr,
    shutdown: &AtomicBool,
    total_budget: Duration,
) -> Result<TcpStream, CommError> {
    let start = Instant::now();
    let mut wait = Duration::from_millis(50);
    loop {
        if shutdown.load(Ordering::SeqCst) {
            return Err(CommError::Io("shutting down".into()));
        }
        match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
            Ok(stream) => {
                stream.set_nodelay(true).ok();
                return Ok(stream);
            }
            Err(_) if start.elapsed() < total_budget => {
                thread::sleep(wait);
                wait = (wait * 2).min(Duration::from_secs(1));
            }
            Err(e) => return Err(CommError::Io(e.to_string())),
        }
    }
}

/// Spawns the node's threads and returns immediately.
pub fn run_node(config: NodeConfig) -> Result<NodeHandle, CommError> {
    match config.role {
        NodeRole::PredictionServer => run_prediction_server(config),
        NodeRole::Relay => run_relay(config),
        NodeRole::PerceptionClient => Err(CommError::Input(
            "the perception client runs in-process; use PredictionClient".into(),
        )),
    }
}

fn spawn_accept_loop<F>(
    listener: TcpListener,
    shutdown: Arc<AtomicBool>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    handler: F,
) -> JoinHandle<()>
where
    F: Fn(TcpStream) -> JoinHandle<()> + Send + 'static,
{
    listener.set_nonblocking(true).expect("nonblocking listener");
    thread::spawn(move || {
        while !shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false).ok();
                    let worker = handler(stream);
                    workers.lock().expect("workers lock").push(worker);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
        }
    })
}

fn run_prediction_server(config: NodeConfig) -> Result<NodeHandle, CommError> {
    let listen = config
        .listen
        .ok_or_else(|| CommError::Input("prediction server needs a listen address".into()))?;
    let predictor = Arc::new(build_predictor(&config)?);
    let listener = TcpListener::bind(listen)?;
    let local_addr = listener.local_addr().ok();

    let shutdown = Arc::new(AtomicBool::new(false));
    let workers = Arc::new(Mutex::new(Vec::new()));
    let faults = Arc::new(AtomicU64::new(0));
    let processed = Arc::new(AtomicU64::new(0));
    let one_way_ms = Arc::new(Mutex::new(Vec::new()));

    let accept_thread = {
        let shutdown = shutdown.clone();
        let faults = faults.clone();
        let processed = processed.clone();
        let one_way_ms = one_way_ms.clone();
        let ontology = config.ontology.clone();
        let read_timeout = config.read_timeout;
        let inject_delay = config.inject_delay;
        let drop_prob = config.drop_prob;
        let shim_seed = config.shim_seed;
        spawn_accept_loop(listener, shutdown.clone(), workers.clone(), move |stream| {
            let shutdown = shutdown.clone();
            let faults = faults.clone();
            let processed = processed.clone();
            let one_way_ms = one_way_ms.clone();
            let predictor = predictor.clone();
            let ontology = ontology.clone();
            stream.set_read_timeout(Some(read_timeout)).ok();
            let reader_stream = stream.try_clone().expect("clone stream");
            thread::spawn(move || {
                let mut reader = FrameReader::new(reader_stream);
                let mut writer =
                    FrameWriter::with_shim(stream, LinkShim::new(inject_delay, drop_prob, shim_seed));
                while !shutdown.load(Ordering::SeqCst) {
                    let msg = match reader.recv() {
                        Ok(m) => m,
                        Err(CommError::Timeout) => continue,
                        Err(CommError::Decode(_)) | Err(CommError::FrameTooLarge(_)) => {
                            faults.fetch_add(1, Ordering::Relaxed);
                            continue;
                        }
                        Err(_) => break,
                    };
                    let reply = match &msg.payload {
                        Payload::Echo(e) => Some(Payload::EchoReply(*e)),
                        Payload::Linguistic(l) => {
                            let ingress = mono_us();
                            match predictor.predict(&l.labels, &ontology) {
                                Ok(pred) => {
                                    one_way_ms
                                        .lock()
                                        .expect("latency lock")
                                        .push((ingress.saturating_sub(l.origin_ts_us)) as f64 / 1e3);
                                    processed.fetch_add(1, Ordering::Relaxed);
                                    Some(Payload::Prediction(PredictionPayload {
                                        maneuver: pred.maneuver.label().to_string(),
                                        posterior: pred.posterior,
                                        origin_seq: l.origin_seq,
                                        origin_ts_us: l.origin_ts_us,
                                        server_ts_us: mono_us(),
                                    }))
                                }
                                Err(_) => {
                                    faults.fetch_add(1, Ordering::Relaxed);
                                    None
                                }
                            }
                        }
                        Payload::Hello(_) => None,
                        _ => {
                            faults.fetch_add(1, Ordering::Relaxed);
                            None
                        }
                    };
                    if let Some(payload) = reply {
                        if writer.send(payload).is_err() {
                            break;
                        }
                    }
                }
            })
        })
    };

    Ok(NodeHandle {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
        workers,
        faults,
        processed,
        one_way_ms,
    })
}

fn run_relay(config: NodeConfig) -> Result<NodeHandle, CommError> {
    let listen = config
        .listen
        .ok_or_else(|| CommError::Input("relay needs a listen address".into()))?;
    let peer = config
        .peer
        .ok_or_else(|| CommError::Input("relay needs the prediction-server address".into()))?;
    let thresholds = config.thresholds.clone().unwrap_or_default();
    let listener = TcpListener::bind(listen)?;
    let local_addr = listener.local_addr().ok();

    let shutdown = Arc::new(AtomicBool::new(false));
    let workers = Arc::new(Mutex::new(Vec::new()));
    let faults = Arc::new(AtomicU64::new(0));
    let processed = Arc::new(AtomicU64::new(0));
    let one_way_ms = Arc::new(Mutex::new(Vec::new()));

    let accept_thread = {
        let shutdown = shutdown.clone();
        let faults = faults.clone();
        let processed = processed.clone();
        let ontology = config.ontology.clone();
        let read_timeout = config.read_timeout;
        let inject_delay = config.inject_delay;
        let drop_prob = config.drop_prob;
        let shim_seed = config.shim_seed;
        spawn_accept_loop(listener, shutdown.clone(), workers.clone(), move |client| {
            let shutdown = shutdown.clone();
            let faults = faults.clone();
            let processed = processed.clone();
            let thresholds = thresholds.clone();
            let ontology = ontology.clone();
            client.set_read_timeout(Some(read_timeout)).ok();
            let client_reader_stream = client.try_clone().expect("clone stream");
            thread::spawn(move || {
                let upstream = match connect_with_backoff(peer, &shutdown, Duration::from_secs(10))
                {
                    Ok(s) => s,
                    Err(_) => return,
                };
                upstream.set_read_timeout(Some(read_timeout)).ok();
                let client_writer = Arc::new(Mutex::new(FrameWriter::new(client)));
                let mut upstream_writer = FrameWriter::with_shim(
                    upstream.try_clone().expect("clone upstream"),
                    LinkShim::new(inject_delay, drop_prob, shim_seed),
                );
                // Upstream pump: PREDICTION replies flow back to the client.
                let pump = {
                    let shutdown = shutdown.clone();
                    let client_writer = client_writer.clone();
                    let mut upstream_reader = FrameReader::new(upstream);
                    thread::spawn(move || {
                        while !shutdown.load(Ordering::SeqCst) {
                            match upstream_reader.recv() {
                                Ok(msg) => {
                                    if let Payload::Prediction(p) = msg.payload {
                                        let mut w = client_writer.lock().expect("writer lock");
                                        if w.send(Payload::Prediction(p)).is_err() {
                                            break;
                                        }
                                    }
                                }
                                Err(CommError::Timeout) => continue,
                                Err(_) => break,
                            }
                        }
                    })
                };
                let mut reader = FrameReader::new(client_reader_stream);
                while !shutdown.load(Ordering::SeqCst) {
                    let msg = match reader.recv() {
                        Ok(m) => m,
                        Err(CommError::Timeout) => continue,
                        Err(CommError::Decode(_)) | Err(CommError::FrameTooLarge(_)) => {
                            faults.fetch_add(1, Ordering::Relaxed);
                            continue;
                        }
                        Err(_) => break,
                    };
                    let ingress = mono_us();
                    match &msg.payload {
                        Payload::Features(_) => {
                            match relay_process(&msg, ingress, &thresholds, &ontology) {
                                Ok(linguistic) => {
                                    if upstream_writer
                                        .send(Payload::Linguistic(linguistic))
                                        .is_err()
                                    {
                                        break;
                                    }
                                    processed.fetch_add(1, Ordering::Relaxed);
                                }
                                Err(_) => {
                                    faults.fetch_add(1, Ordering::Relaxed);
                                }
                            }
                        }
                        Payload::Echo(e) => {
                            let mut w = client_writer.lock().expect("writer lock");
                            if w.send(Payload::EchoReply(*e)).is_err() {
                                break;
                            }
                        }
                        Payload::Hello(_) => {}
                        _ => {
                            faults.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                let _ = pump.join();
            })
        })
    };

    Ok(NodeHandle {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
        workers,
        faults,
        processed,
        one_way_ms,
    })
}

/// Client endpoint used by the TV side: streams features toward the
/// prediction service over either topology and collects the replies.
/// Reconnects with bounded backoff when the peer goes away.
pub struct PredictionClient {
    addr: SocketAddr,
    topology: Topology,
    ontology: Ontology,
    thresholds: Thresholds,
    inject_delay: Duration,
    shim_seed: u64,
    read_timeout: Duration,
    conn: Option<(FrameReader<TcpStream>, FrameWriter<TcpStream>)>,
    shutdown_flag: AtomicBool,
}

impl PredictionClient {
    pub fn connect(
        addr: SocketAddr,
        topology: Topology,
        ontology: Ontology,
        thresholds: Thresholds,
        inject_delay: Duration,
        shim_seed: u64,
    ) -> Result<Self, CommError> {
        let mut client = PredictionClient {
            addr,
            topology,
            ontology,
            thresholds,
            inject_delay,
            shim_seed,
            read_timeout: Duration::from_millis(50),
            conn: None,
            shutdown_flag: AtomicBool::new(false),
        };
        client.ensure_connected()?;
        Ok(client)
    }

    fn ensure_connected(&mut self) -> Result<(), CommError> {
        if self.conn.is_none() {
            let stream =
                connect_with_backoff(self.addr, &self.shutdown_flag, Duration::from_secs(10))?;
            stream.set_read_timeout(Some(self.read_timeout))?;
            let reader = FrameReader::new(stream.try_clone()?);
            let mut writer = FrameWriter::with_shim(
                stream,
                LinkShim::new(self.inject_delay, 0.0, self.shim_seed),
            );
            writer.send(Payload::Hello(HelloPayload {
                node: "tv".into(),
                role: "perception_client".into(),
            }))?;
            self.conn = Some((reader, writer));
        }
        Ok(())
    }

    /// Sends one feature sample. Relay topology ships the numeric FEATURES
    /// payload; direct topology categorizes locally and ships LINGUISTIC.
    /// Returns the origin timestamp used, for latency accounting.
    pub fn send_features(
        &mut self,
        numeric: &NumericFeatures,
        schema_version: u32,
    ) -> Result<u64, CommError> {
        let origin_ts = mono_us();
        let payload = match self.topology {
            Topology::Relay => Payload::Features(match schema_version {
                1 => FeaturesPayload::v1(numeric, origin_ts),
                2 => FeaturesPayload::v2(numeric, origin_ts),
                v => return Err(CommError::Schema(v)),
            }),
            Topology::Direct => {
                let frame = categorize(numeric, &self.thresholds, &self.ontology)
                    .map_err(|e| CommError::Input(e.to_string()))?;
                Payload::Linguistic(LinguisticPayload {
                    schema_version: LINGUISTIC_SCHEMA_VERSION,
                    labels: frame
                        .labels(&self.ontology)
                        .into_iter()
                        .map(|s| s.to_string())
                        .collect(),
                    origin_seq: 0,
                    origin_ts_us: origin_ts,
                    relay_ingress_ts_us: origin_ts,
                    relay_egress_ts_us: origin_ts,
                })
            }
        };
        for attempt in 0..2 {
            self.ensure_connected()?;
            let (_, writer) = self.conn.as_mut().expect("connected");
            let seq = writer.next_seq();
            match writer.send_prestamped(&Message {
                seq,
                ts_us: origin_ts,
                payload: payload.clone(),
            }) {
                Ok(()) => return Ok(origin_ts),
                Err(CommError::Io(_)) if attempt == 0 => {
                    self.conn = None;
                }
                Err(e) => return Err(e),
            }
        }
        Err(CommError::Io("send failed after reconnect".into()))
    }

    /// Waits up to `deadline` for the next PREDICTION. `Ok(None)` means the
    /// deadline passed quietly; connection loss triggers a reconnect on the
    /// next send.
    pub fn recv_prediction(
        &mut self,
        deadline: Duration,
    ) -> Result<Option<PredictionPayload>, CommError> {
        let start = Instant::now();
        loop {
            self.ensure_connected()?;
            let (reader, _) = self.conn.as_mut().expect("connected");
            match reader.recv() {
                Ok(msg) => {
                    if let Payload::Prediction(p) = msg.payload {
                        return Ok(Some(p));
                    }
                }
                Err(CommError::Timeout) => {}
                Err(CommError::Decode(_)) => {}
                Err(_) => {
                    self.conn = None;
                }
            }
            if start.elapsed() >= deadline {
                return Ok(None);
            }
        }
    }
}
