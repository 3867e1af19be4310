//! Paced point-to-point transfer of one frame with an acknowledgement.

use std::io::{Read, Write};
use std::net::{Ipv4Addr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{decode_frame, frame_len, HEADER_LEN};
use crate::error::{Error, Result};

const ACK: u8 = 0x06;
const NAK: u8 = 0x15;
pub const MAX_BUCKET_BYTES: usize = 64 * 1024;
pub const DEFAULT_PORT: u16 = 45511;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Anonymous OS pipe between two threads of this process.
    Pipe,
    /// TCP over 127.0.0.1; port 0 picks a free port.
    Tcp { port: u16 },
}

impl Transport {
    pub fn loopback() -> Self {
        Transport::Tcp { port: DEFAULT_PORT }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulatedChannel {
    pub bandwidth_bps: f64,
    pub one_way_latency: f64,
    pub transport: Transport,
    pub bucket_bytes: usize,
}

impl EmulatedChannel {
    pub fn new(bandwidth_bps: f64, one_way_latency: f64, transport: Transport) -> Result<Self> {
        if !(bandwidth_bps.is_finite() && bandwidth_bps > 0.0) {
            return Err(Error::Invalid(format!("bandwidth must be positive and finite, got {bandwidth_bps}")));
        }
        if !(one_way_latency.is_finite() && one_way_latency >= 0.0) {
            return Err(Error::Invalid(format!("latency must be >= 0, got {one_way_latency}")));
        }
        Ok(Self { bandwidth_bps, one_way_latency, transport, bucket_bytes: MAX_BUCKET_BYTES })
    }

    pub fn with_bucket(mut self, bytes: usize) -> Result<Self> {
        if bytes == 0 || bytes > MAX_BUCKET_BYTES {
            return Err(Error::Invalid(format!("bucket must be 1..={MAX_BUCKET_BYTES} bytes, got {bytes}")));
        }
        self.bucket_bytes = bytes;
        Ok(self)
    }
}

/// Byte-rate limiter. Starts empty so the first burst is paced too.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(bytes_per_second: f64, capacity: usize) -> Self {
        Self { rate: bytes_per_second, capacity: capacity as f64, tokens: 0.0, last: Instant::now() }
    }

    /// Blocks until `n` bytes (at most the capacity) may be sent.
    pub fn acquire(&mut self, n: usize) {
        let n = (n as f64).min(self.capacity);
        loop {
            let now = Instant::now();
            self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.rate).min(self.capacity);
            self.last = now;
            if self.tokens >= n {
                self.tokens -= n;
                return;
            }
            thread::sleep(Duration::from_secs_f64((n - self.tokens) / self.rate));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub frame_bytes: usize,
    pub measured_seconds: f64,
    pub expected_seconds: f64,
}

impl TransferReport {
    pub fn relative_error(&self) -> f64 {
        (self.measured_seconds - self.expected_seconds).abs() / self.expected_seconds
    }
}

pub fn expected_transfer_seconds(frame_bytes: usize, channel: &EmulatedChannel) -> f64 {
    frame_bytes as f64 * 8.0 / channel.bandwidth_bps + channel.one_way_latency
}

/// Sends one frame from a sender thread to a receiver thread over the
/// channel's transport. The receiver decodes and verifies the frame, waits
/// the one-way latency and acknowledges; the sender times send start to ack.
pub fn run_transfer(frame: &[u8], channel: &EmulatedChannel) -> Result<TransferReport> {
    frame_len(frame)?;
    let latency = Duration::from_secs_f64(channel.one_way_latency);
    let measured_seconds = match channel.transport {
        Transport::Pipe => {
            let (data_rx, data_tx) = std::io::pipe()?;
            let (ack_rx, ack_tx) = std::io::pipe()?;
            let receiver = thread::spawn(move || receive(data_rx, ack_tx, latency));
            let sent = send(frame, data_tx, ack_rx, channel);
            join(receiver)?;
            sent?
        }
        Transport::Tcp { port } => {
            let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, port))?;
            let addr = listener.local_addr()?;
            let receiver = thread::spawn(move || -> Result<()> {
                let (stream, _) = listener.accept()?;
                stream.set_nodelay(true)?;
                receive(stream.try_clone()?, stream, latency)
            });
            let sent = TcpStream::connect(addr).map_err(Error::from).and_then(|stream| {
                stream.set_nodelay(true)?;
                send(frame, stream.try_clone()?, stream, channel)
            });
            join(receiver)?;
            sent?
        }
    };
    Ok(TransferReport {
        frame_bytes: frame.len(),
        measured_seconds,
        expected_seconds: expected_transfer_seconds(frame.len(), channel),
    })
}

fn join(handle: thread::JoinHandle<Result<()>>) -> Result<()> {
    handle.join().map_err(|_| Error::Protocol("receiver thread panicked".into()))?
}

fn send(frame: &[u8], mut tx: impl Write, mut ack: impl Read, channel: &EmulatedChannel) -> Result<f64> {
    let mut bucket = TokenBucket::new(channel.bandwidth_bps / 8.0, channel.bucket_bytes);
    let start = Instant::now();
    for chunk in frame.chunks(channel.bucket_bytes) {
        bucket.acquire(chunk.len());
        tx.write_all(chunk)?;
    }
    tx.flush()?;
    let mut reply = [0u8; 1];
    ack.read_exact(&mut reply)?;
    let elapsed = start.elapsed().as_secs_f64();
    match reply[0] {
        ACK => Ok(elapsed),
        NAK => Err(Error::Protocol("receiver rejected the frame".into())),
        other => Err(Error::Protocol(format!("unexpected ack byte {other:#04x}"))),
    }
}

fn receive(mut rx: impl Read, mut ack: impl Write, latency: Duration) -> Result<()> {
    let mut buf = vec![0u8; HEADER_LEN];
    rx.read_exact(&mut buf)?;
    let total = match frame_len(&buf) {
        Ok(n) => n,
        Err(e) => {
            ack.write_all(&[NAK])?;
            return Err(e);
        }
    };
    buf.resize(total, 0);
    rx.read_exact(&mut buf[HEADER_LEN..])?;
    let verdict = decode_frame(&buf);
    thread::sleep(latency);
    ack.write_all(&[if verdict.is_ok() { ACK } else { NAK }])?;
    ack.flush()?;
    verdict.map(|_| ())
}
