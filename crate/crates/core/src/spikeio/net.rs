// SPDX-License-Identifier: Apache-2.0

//! Reliable windowed exchange over UDP.
//!
//! Both directions send a stream `Start, batch.., End` with per-packet
//! sequence numbers, retransmit until acked and keep at most
//! `max_in_flight` packets unacknowledged. Receivers ack every packet,
//! including duplicates, and ignore the duplicate payload.
//!
//! The server's `End` carries one entry `(bins, channels)` describing the
//! observation matrix; its `Output` batches carry `(bin, probe)` cells.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::packet::batches;
use super::{ObservationMatrix, PacketKind, SpikeEvent, SpikeIoError, SpikePacket, SpikeTrainInput, MAX_DATAGRAM, MAX_EVENTS};

/// Runs one window: `(session, input) -> observation`.
pub type WindowRunner = Arc<dyn Fn(u32, &SpikeTrainInput) -> Result<ObservationMatrix, String> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub workers: usize,
    /// Channel count attached to every received input train.
    pub input_channels: usize,
    pub max_in_flight: usize,
    pub events_per_packet: usize,
    pub retransmit_after: Duration,
    pub max_retries: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            workers: std::thread::available_parallelism().map_or(2, |n| n.get()),
            input_channels: 49,
            max_in_flight: 16,
            events_per_packet: MAX_EVENTS,
            retransmit_after: Duration::from_millis(30),
            max_retries: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub malformed: u64,
    pub unknown_session: u64,
    pub duplicates: u64,
    pub windows: u64,
    pub rejected: u64,
    pub retransmitted: u64,
}

type Key = (SocketAddr, u32);

/// Outbound stream with a bounded number of unacked packets.
struct ReliableStream {
    queue: VecDeque<SpikePacket>,
    in_flight: BTreeMap<u32, (Vec<u8>, Instant, u32)>,
    max_in_flight: usize,
    peak: usize,
}

impl ReliableStream {
    fn new(packets: Vec<SpikePacket>, max_in_flight: usize) -> Self {
        ReliableStream {
            queue: packets.into(),
            in_flight: BTreeMap::new(),
            max_in_flight: max_in_flight.max(1),
            peak: 0,
        }
    }

    fn ack(&mut self, seq: u32) {
        self.in_flight.remove(&seq);
    }

    fn done(&self) -> bool {
        self.queue.is_empty() && self.in_flight.is_empty()
    }

    /// Sends new packets up to the window and retransmits stale ones.
    /// Returns the retransmission count, or `None` once retries run out.
    fn pump(&mut self, sock: &UdpSocket, to: Option<SocketAddr>, after: Duration, max_retries: u32) -> Option<u64> {
        let now = Instant::now();
        let mut re = 0;
        for (bytes, sent, tries) in self.in_flight.values_mut() {
            if now.duration_since(*sent) >= after {
                if *tries >= max_retries {
                    return None;
                }
                send(sock, to, bytes);
                *sent = now;
                *tries += 1;
                re += 1;
            }
        }
        while self.in_flight.len() < self.max_in_flight {
            let Some(p) = self.queue.pop_front() else { break };
            let bytes = p.encode().expect("batches respect the datagram limit");
            send(sock, to, &bytes);
            self.in_flight.insert(p.sequence, (bytes, now, 0));
        }
        self.peak = self.peak.max(self.in_flight.len());
        Some(re)
    }
}

fn send(sock: &UdpSocket, to: Option<SocketAddr>, bytes: &[u8]) {
    let r = match to {
        Some(a) => sock.send_to(bytes, a),
        None => sock.send(bytes),
    };
    if let Err(e) = r {
        log::debug!("udp send failed: {e}");
    }
}

fn ack(sock: &UdpSocket, to: Option<SocketAddr>, p: &SpikePacket) {
    let a = SpikePacket::control(PacketKind::Ack, p.session, p.sequence);
    send(sock, to, &a.encode().expect("control packet"));
}

fn window_stream(session: u32, first: PacketKind, body: PacketKind, events: &[SpikeEvent], per_packet: usize, end_payload: Vec<SpikeEvent>) -> Vec<SpikePacket> {
    let mut out = vec![SpikePacket::control(first, session, 0)];
    for (i, b) in batches(events, per_packet).into_iter().enumerate() {
        out.push(SpikePacket::new(body, session, i as u32 + 1, b));
    }
    let end = out.len() as u32;
    out.push(SpikePacket::new(PacketKind::End, session, end, end_payload));
    out
}

struct Inbound {
    batches: BTreeMap<u32, Vec<SpikeEvent>>,
    seen: HashSet<u32>,
    ended: bool,
}

struct Job {
    key: Key,
    input: SpikeTrainInput,
}

struct JobResult {
    key: Key,
    result: Result<ObservationMatrix, String>,
}

/// UDP window server. Dropping it stops the I/O thread.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<Mutex<ServerStats>>,
    io: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, runner: WindowRunner, cfg: ServerConfig) -> std::io::Result<Server> {
        let sock = UdpSocket::bind(addr)?;
        sock.set_read_timeout(Some(Duration::from_millis(2)))?;
        let addr = sock.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(Mutex::new(ServerStats::default()));
        let (job_tx, job_rx) = mpsc::channel::<Job>();
        let (res_tx, res_rx) = mpsc::channel::<JobResult>();
        let job_rx = Arc::new(Mutex::new(job_rx));
        let workers = (0..cfg.workers.max(1))
            .map(|_| {
                let rx = Arc::clone(&job_rx);
                let tx = res_tx.clone();
                let runner = Arc::clone(&runner);
                std::thread::spawn(move || loop {
                    let job = match rx.lock().expect("job queue").recv() {
                        Ok(j) => j,
                        Err(_) => return,
                    };
                    let result = runner(job.key.1, &job.input);
                    if tx.send(JobResult { key: job.key, result }).is_err() {
                        return;
                    }
                })
            })
            .collect();
        let io = {
            let stop = Arc::clone(&stop);
            let stats = Arc::clone(&stats);
            std::thread::spawn(move || server_loop(sock, cfg, stop, stats, job_tx, res_rx))
        };
        Ok(Server {
            addr,
            stop,
            stats,
            io: Some(io),
            workers,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> ServerStats {
        *self.stats.lock().expect("stats")
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.io.take() {
            let _ = h.join();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn server_loop(
    sock: UdpSocket,
    cfg: ServerConfig,
    stop: Arc<AtomicBool>,
    stats: Arc<Mutex<ServerStats>>,
    jobs: Sender<Job>,
    results: Receiver<JobResult>,
) {
    let mut inbound: HashMap<Key, Inbound> = HashMap::new();
    let mut outbound: HashMap<Key, ReliableStream> = HashMap::new();
    let mut buf = [0u8; MAX_DATAGRAM + 1];
    let bump = |f: &dyn Fn(&mut ServerStats)| f(&mut stats.lock().expect("stats"));

    while !stop.load(Ordering::SeqCst) {
        match sock.recv_from(&mut buf) {
            Ok((n, from)) => {
                let Ok(p) = SpikePacket::decode(&buf[..n]) else {
                    bump(&|s| s.malformed += 1);
                    continue;
                };
                let key = (from, p.session);
                match p.kind {
                    PacketKind::Ack => {
                        if let Some(o) = outbound.get_mut(&key) {
                            o.ack(p.sequence);
                        }
                    }
                    PacketKind::Start => {
                        let st = inbound.entry(key).or_insert_with(|| Inbound {
                            batches: BTreeMap::new(),
                            seen: HashSet::new(),
                            ended: false,
                        });
                        if !st.seen.insert(p.sequence) {
                            bump(&|s| s.duplicates += 1);
                        }
                        ack(&sock, Some(from), &p);
                    }
                    PacketKind::Input | PacketKind::End => {
                        let Some(st) = inbound.get_mut(&key) else {
                            bump(&|s| s.unknown_session += 1);
                            continue;
                        };
                        if !st.seen.insert(p.sequence) || st.ended {
                            bump(&|s| s.duplicates += 1);
                            ack(&sock, Some(from), &p);
                            continue;
                        }
                        if p.kind == PacketKind::Input {
                            st.batches.insert(p.sequence, p.events.clone());
                            ack(&sock, Some(from), &p);
                            continue;
                        }
                        st.ended = true;
                        ack(&sock, Some(from), &p);
                        let complete = (1..p.sequence).all(|q| st.batches.contains_key(&q));
                        if complete {
                            // batches are keyed by sequence, so this is already in order
                            let events: Vec<SpikeEvent> = st.batches.values().flatten().copied().collect();
                            match SpikeTrainInput::new(cfg.input_channels, events) {
                                Ok(input) => {
                                    let _ = jobs.send(Job { key, input });
                                }
                                Err(e) => reject(&mut outbound, &cfg, key, &stats, &e.to_string()),
                            }
                        } else {
                            reject(&mut outbound, &cfg, key, &stats, "missing input batch");
                        }
                    }
                    PacketKind::Output | PacketKind::Error => bump(&|s| s.malformed += 1),
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => {
                log::warn!("udp receive failed: {e}");
            }
        }

        while let Ok(r) = results.try_recv() {
            match r.result {
                Ok(m) => {
                    let cells = m.events();
                    let end = vec![SpikeEvent {
                        time_step: m.bins as u32,
                        channel: m.channels as u16,
                    }];
                    let stream = window_stream(r.key.1, PacketKind::Start, PacketKind::Output, &cells, cfg.events_per_packet, end);
                    outbound.insert(r.key, ReliableStream::new(stream, cfg.max_in_flight));
                    bump(&|s| s.windows += 1);
                }
                Err(msg) => reject(&mut outbound, &cfg, r.key, &stats, &msg),
            }
        }

        let mut finished = Vec::new();
        for (key, o) in outbound.iter_mut() {
            match o.pump(&sock, Some(key.0), cfg.retransmit_after, cfg.max_retries) {
                Some(re) if re > 0 => bump(&|s| s.retransmitted += re),
                Some(_) => {}
                None => {
                    log::warn!("session {} at {}: peer stopped acknowledging", key.1, key.0);
                    finished.push(*key);
                }
            }
            if o.done() {
                finished.push(*key);
            }
        }
        for k in finished {
            outbound.remove(&k);
        }
    }
}

fn reject(outbound: &mut HashMap<Key, ReliableStream>, cfg: &ServerConfig, key: Key, stats: &Mutex<ServerStats>, why: &str) {
    log::warn!("session {} rejected: {why}", key.1);
    stats.lock().expect("stats").rejected += 1;
    let p = SpikePacket::control(PacketKind::Error, key.1, 0);
    outbound.insert(key, ReliableStream::new(vec![p], cfg.max_in_flight));
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub max_in_flight: usize,
    pub events_per_packet: usize,
    pub retransmit_after: Duration,
    /// Per-window deadline.
    pub timeout: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            max_in_flight: 8,
            events_per_packet: MAX_EVENTS,
            retransmit_after: Duration::from_millis(30),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub sent_packets: u64,
    pub retransmitted: u64,
    pub duplicates: u64,
    /// Largest number of unacked packets ever outstanding.
    pub peak_in_flight: usize,
}

/// Window-at-a-time client bound to one server.
pub struct Client {
    sock: UdpSocket,
    cfg: ClientConfig,
    stats: ClientStats,
}

struct Reply {
    cells: BTreeMap<u32, Vec<SpikeEvent>>,
    end: Option<(u32, SpikeEvent)>,
    rejected: bool,
}

impl Client {
    pub fn connect(server: SocketAddr, cfg: ClientConfig) -> std::io::Result<Client> {
        let local: SocketAddr = if server.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }
            .parse()
            .expect("literal");
        let sock = UdpSocket::bind(local)?;
        sock.connect(server)?;
        sock.set_read_timeout(Some(Duration::from_millis(2)))?;
        Ok(Client {
            sock,
            cfg,
            stats: ClientStats::default(),
        })
    }

    pub fn stats(&self) -> ClientStats {
        self.stats
    }

    /// Streams `input` as window `session` and waits for its observation.
    pub fn run_window(&mut self, session: u32, input: &SpikeTrainInput) -> Result<ObservationMatrix, SpikeIoError> {
        let deadline = Instant::now() + self.cfg.timeout;
        let mut stream = window_stream(session, PacketKind::Start, PacketKind::Input, &input.events, self.cfg.events_per_packet, Vec::new());
        let end = stream.pop().expect("end packet");
        let start = stream.remove(0);
        let mut reply = Reply {
            cells: BTreeMap::new(),
            end: None,
            rejected: false,
        };
        // the server must know the session before batches arrive, and must
        // hold every batch before the end marker
        for phase in [vec![start], stream, vec![end]] {
            self.send_phase(session, phase, &mut reply, deadline)?;
        }
        loop {
            if reply.rejected {
                return Err(SpikeIoError::Rejected(session));
            }
            if let Some((seq, shape)) = reply.end {
                if (1..seq).all(|q| reply.cells.contains_key(&q)) {
                    let mut m = ObservationMatrix::zeros(shape.time_step as usize, usize::from(shape.channel));
                    for e in reply.cells.values().flatten() {
                        if (e.time_step as usize) < m.bins && usize::from(e.channel) < m.channels {
                            m.set(e.time_step as usize, usize::from(e.channel));
                        }
                    }
                    return Ok(m);
                }
            }
            if Instant::now() > deadline {
                return Err(SpikeIoError::Timeout(session));
            }
            self.poll(session, None, &mut reply)?;
        }
    }

    fn send_phase(&mut self, session: u32, packets: Vec<SpikePacket>, reply: &mut Reply, deadline: Instant) -> Result<(), SpikeIoError> {
        let n = packets.len() as u64;
        let mut s = ReliableStream::new(packets, self.cfg.max_in_flight);
        loop {
            let re = s
                .pump(&self.sock, None, self.cfg.retransmit_after, u32::MAX)
                .unwrap_or(0);
            self.stats.retransmitted += re;
            self.stats.peak_in_flight = self.stats.peak_in_flight.max(s.peak);
            if s.done() {
                self.stats.sent_packets += n;
                return Ok(());
            }
            if Instant::now() > deadline {
                return Err(SpikeIoError::Timeout(session));
            }
            self.poll(session, Some(&mut s), reply)?;
        }
    }

    fn poll(&mut self, session: u32, out: Option<&mut ReliableStream>, reply: &mut Reply) -> Result<(), SpikeIoError> {
        let mut buf = [0u8; MAX_DATAGRAM + 1];
        let n = match self.sock.recv(&mut buf) {
            Ok(n) => n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(()),
            // an ICMP unreachable from a not-yet-bound server; keep retrying
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let Ok(p) = SpikePacket::decode(&buf[..n]) else {
            return Ok(());
        };
        if p.kind == PacketKind::Ack {
            if let (Some(o), true) = (out, p.session == session) {
                o.ack(p.sequence);
            }
            return Ok(());
        }
        // ack anything else so a stale stream from an earlier window drains too
        ack(&self.sock, None, &p);
        if p.session != session {
            return Ok(());
        }
        match p.kind {
            PacketKind::Error => reply.rejected = true,
            PacketKind::Output => {
                if reply.cells.insert(p.sequence, p.events).is_some() {
                    self.stats.duplicates += 1;
                }
            }
            PacketKind::End => {
                if let Some(&shape) = p.events.first() {
                    reply.end = Some((p.sequence, shape));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
