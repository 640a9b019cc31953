//! Out-of-process denoisers over a framed byte stream (protocol v1).
//!
//! ```text
//! handshake  client -> "DNP1" u32 H, u32 W, u32 T
//!            server -> "DNP1" u8 accept (1) / reject (0)
//! request    0x01 u32 t, H·W (re, im) f32
//! response   0x81 H·W (re, im) f32
//! shutdown   0x02
//! ```
//!
//! All integers are little-endian. The transport is either a child process
//! (stdin/stdout) or a TCP socket. A connection carries one request at a
//! time; [`RemoteDenoiser`] keeps a pool so concurrent chains each get their
//! own connection.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::Denoiser;
use crate::error::{Error, Result};
use crate::kspace::format::{decode_complex_f32, encode_complex_f32};
use crate::kspace::ComplexImage;
use crate::schedule::Schedule;

pub const MAGIC: &[u8; 4] = b"DNP1";
pub const OP_PREDICT: u8 = 0x01;
pub const OP_SHUTDOWN: u8 = 0x02;
pub const OP_PREDICTION: u8 = 0x81;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("plugin rejected geometry {0:?}")]
    Rejected(Geometry),

    #[error("plugin protocol violation: {0}")]
    Protocol(String),

    #[error("image shape {actual:?} does not match negotiated geometry {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("timestep {t} outside the negotiated range 1..={steps}")]
    InvalidTimestep { t: usize, steps: u32 },

    #[error("plugin did not answer within {0:?}")]
    Timeout(Duration),

    #[error("plugin returned a non-finite value at sample {0}")]
    NonFinite(usize),

    #[error("plugin transport failed: {0}")]
    Transport(#[from] io::Error),
}

/// Image size and schedule length agreed during the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub height: u32,
    pub width: u32,
    pub steps: u32,
}

impl Geometry {
    pub fn new(height: usize, width: usize, steps: usize) -> Self {
        Self {
            height: height as u32,
            width: width as u32,
            steps: steps as u32,
        }
    }

    fn shape(&self) -> (usize, usize) {
        (self.height as usize, self.width as usize)
    }

    fn payload_len(&self) -> usize {
        self.height as usize * self.width as usize * 8
    }

    fn encode(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..4].copy_from_slice(MAGIC);
        out[4..8].copy_from_slice(&self.height.to_le_bytes());
        out[8..12].copy_from_slice(&self.width.to_le_bytes());
        out[12..].copy_from_slice(&self.steps.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PluginEndpoint {
    /// `host:port` of a listening plugin.
    Tcp(String),
    /// Program and arguments of a plugin speaking the protocol on stdio.
    Command(Vec<String>),
}

type Chunk = io::Result<Vec<u8>>;

/// One live, handshaken plugin connection.
pub struct PluginConnection {
    writer: Box<dyn Write + Send>,
    incoming: Receiver<Chunk>,
    buffered: Vec<u8>,
    geometry: Geometry,
    timeout: Duration,
    socket: Option<TcpStream>,
    child: Option<Child>,
    healthy: bool,
}

impl PluginConnection {
    pub fn open(endpoint: &PluginEndpoint, geometry: Geometry, timeout: Duration)
        -> Result<Self, PluginError>
    {
        match endpoint {
            PluginEndpoint::Tcp(addr) => Self::connect_tcp(addr, geometry, timeout),
            PluginEndpoint::Command(argv) => Self::spawn(argv, geometry, timeout),
        }
    }

    pub fn connect_tcp(addr: &str, geometry: Geometry, timeout: Duration)
        -> Result<Self, PluginError>
    {
        let target = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {addr}")))?;
        let stream = TcpStream::connect_timeout(&target, timeout)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let writer = stream.try_clone()?;
        let mut conn = Self::from_parts(reader, writer, geometry, timeout);
        conn.socket = Some(stream);
        conn.handshake()?;
        Ok(conn)
    }

    pub fn spawn(argv: &[String], geometry: Geometry, timeout: Duration)
        -> Result<Self, PluginError>
    {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| PluginError::Protocol("empty plugin command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Self::from_parts(stdout, stdin, geometry, timeout);
        conn.child = Some(child);
        conn.handshake()?;
        Ok(conn)
    }

    /// Wraps an arbitrary byte stream; the caller performs the handshake.
    pub fn from_parts<R, W>(reader: R, writer: W, geometry: Geometry, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self {
            writer: Box::new(writer),
            incoming: pump(reader),
            buffered: Vec::new(),
            geometry,
            timeout,
            socket: None,
            child: None,
            healthy: true,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn handshake(&mut self) -> Result<(), PluginError> {
        let hello = self.geometry.encode();
        self.guarded(|c| {
            c.send(&hello)?;
            let mut reply = [0u8; 5];
            c.recv_exact(&mut reply, Instant::now() + c.timeout)?;
            if &reply[..4] != MAGIC {
                return Err(PluginError::Protocol(format!(
                    "bad handshake magic {:?}",
                    &reply[..4]
                )));
            }
            match reply[4] {
                1 => Ok(()),
                0 => Err(PluginError::Rejected(c.geometry)),
                other => Err(PluginError::Protocol(format!("bad accept flag {other}"))),
            }
        })
    }

    pub fn predict(&mut self, y_t: &ComplexImage, t: usize) -> Result<ComplexImage, PluginError> {
        if !self.healthy {
            return Err(PluginError::Protocol("connection is unusable after an earlier failure".into()));
        }
        if y_t.shape() != self.geometry.shape() {
            return Err(PluginError::ShapeMismatch {
                expected: self.geometry.shape(),
                actual: y_t.shape(),
            });
        }
        if t == 0 || t > self.geometry.steps as usize {
            return Err(PluginError::InvalidTimestep {
                t,
                steps: self.geometry.steps,
            });
        }
        let mut frame = Vec::with_capacity(5 + self.geometry.payload_len());
        frame.push(OP_PREDICT);
        frame.extend_from_slice(&(t as u32).to_le_bytes());
        encode_complex_f32(y_t.data(), &mut frame);
        self.guarded(|c| {
            c.send(&frame)?;
            let deadline = Instant::now() + c.timeout;
            let mut op = [0u8; 1];
            c.recv_exact(&mut op, deadline)?;
            if op[0] != OP_PREDICTION {
                return Err(PluginError::Protocol(format!(
                    "expected opcode 0x81, got {:#04x}",
                    op[0]
                )));
            }
            let mut payload = vec![0u8; c.geometry.payload_len()];
            c.recv_exact(&mut payload, deadline)?;
            let data = decode_complex_f32(&payload);
            if let Some(i) = data.iter().position(|z| !z.is_finite()) {
                return Err(PluginError::NonFinite(i));
            }
            let (h, w) = c.geometry.shape();
            Ok(ComplexImage::from_raw(h, w, data))
        })
    }

    /// Sends the shutdown opcode and releases the transport.
    pub fn close(mut self) -> Result<(), PluginError> {
        let sent = self.send(&[OP_SHUTDOWN]);
        self.healthy = false;
        sent
    }

    /// Runs `f`, marking the connection unusable if it fails.
    fn guarded<T>(
        &mut self,
        f: impl FnOnce(&mut Self) -> Result<T, PluginError>,
    ) -> Result<T, PluginError> {
        let out = f(self);
        if out.is_err() {
            self.healthy = false;
        }
        out
    }

    fn send(&mut self, bytes: &[u8]) -> Result<(), PluginError> {
        self.writer.write_all(bytes)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_exact(&mut self, out: &mut [u8], deadline: Instant) -> Result<(), PluginError> {
        while self.buffered.len() < out.len() {
            let now = Instant::now();
            let remaining = deadline.saturating_duration_since(now);
            match self.incoming.recv_timeout(remaining) {
                Ok(Ok(chunk)) if !chunk.is_empty() => self.buffered.extend_from_slice(&chunk),
                Ok(Ok(_)) | Err(RecvTimeoutError::Disconnected) => {
                    return Err(PluginError::Transport(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        format!(
                            "plugin closed the stream after {} of {} bytes",
                            self.buffered.len(),
                            out.len()
                        ),
                    )));
                }
                Ok(Err(e)) => return Err(PluginError::Transport(e)),
                Err(RecvTimeoutError::Timeout) => return Err(PluginError::Timeout(self.timeout)),
            }
        }
        out.copy_from_slice(&self.buffered[..out.len()]);
        self.buffered.drain(..out.len());
        Ok(())
    }
}

impl Drop for PluginConnection {
    fn drop(&mut self) {
        if self.healthy {
            let _ = self.send(&[OP_SHUTDOWN]);
        }
        if let Some(socket) = self.socket.take() {
            let _ = socket.shutdown(Shutdown::Both);
        }
        if let Some(mut child) = self.child.take() {
            // closing stdin lets a well-behaved plugin exit on its own
            self.writer = Box::new(io::sink());
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }
}

/// Moves blocking reads onto a helper thread so that receives can time out
/// on any transport.
fn pump<R: Read + Send + 'static>(mut reader: R) -> Receiver<Chunk> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            match reader.read(&mut buf) {
                Ok(0) => {
                    let _ = tx.send(Ok(Vec::new()));
                    return;
                }
                Ok(n) => {
                    if tx.send(Ok(buf[..n].to_vec())).is_err() {
                        return;
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        }
    });
    rx
}

/// A [`Denoiser`] backed by plugin connections, one per concurrent caller.
pub struct RemoteDenoiser {
    endpoint: PluginEndpoint,
    geometry: Geometry,
    timeout: Duration,
    idle: Mutex<Vec<PluginConnection>>,
}

impl RemoteDenoiser {
    /// Opens a first connection so that handshake failures surface here.
    pub fn connect(endpoint: PluginEndpoint, geometry: Geometry, timeout: Duration)
        -> Result<Self, PluginError>
    {
        let first = PluginConnection::open(&endpoint, geometry, timeout)?;
        Ok(Self {
            endpoint,
            geometry,
            timeout,
            idle: Mutex::new(vec![first]),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn checkout(&self) -> Result<PluginConnection, PluginError> {
        let pooled = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        match pooled {
            Some(conn) => Ok(conn),
            None => PluginConnection::open(&self.endpoint, self.geometry, self.timeout),
        }
    }
}

impl Denoiser for RemoteDenoiser {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        if schedule.label_range() != self.geometry.steps as usize {
            return Err(Error::invalid(format!(
                "plugin negotiated T={} but the schedule spans T={}",
                self.geometry.steps,
                schedule.label_range()
            )));
        }
        let mut conn = self.checkout()?;
        let out = conn.predict(y_t, t)?;
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).push(conn);
        Ok(out)
    }
}

/// Server side of the protocol.
pub trait PluginHandler {
    fn accept(&mut self, _geometry: Geometry) -> bool {
        true
    }

    fn predict(&mut self, y_t: &ComplexImage, t: usize) -> Result<ComplexImage>;
}

/// Returns its input unchanged.
#[derive(Debug, Default)]
pub struct EchoHandler;

impl PluginHandler for EchoHandler {
    fn predict(&mut self, y_t: &ComplexImage, _t: usize) -> Result<ComplexImage> {
        Ok(y_t.clone())
    }
}

/// Always answers with a zero field.
#[derive(Debug, Default)]
pub struct ZeroHandler;

impl PluginHandler for ZeroHandler {
    fn predict(&mut self, y_t: &ComplexImage, _t: usize) -> Result<ComplexImage> {
        Ok(ComplexImage::zeros(y_t.height(), y_t.width()))
    }
}

/// Serves any in-process [`Denoiser`] against a fixed schedule.
pub struct DenoiserHandler<D> {
    pub denoiser: D,
    pub schedule: Schedule,
}

impl<D: Denoiser> PluginHandler for DenoiserHandler<D> {
    fn accept(&mut self, geometry: Geometry) -> bool {
        geometry.steps as usize == self.schedule.label_range()
    }

    fn predict(&mut self, y_t: &ComplexImage, t: usize) -> Result<ComplexImage> {
        self.denoiser.predict_noise(y_t, t, &self.schedule)
    }
}

/// Runs one plugin session until the client shuts down or disconnects.
pub fn serve<R: Read, W: Write, H: PluginHandler>(
    mut reader: R,
    mut writer: W,
    handler: &mut H,
) -> Result<()> {
    let mut hello = [0u8; 16];
    reader.read_exact(&mut hello).map_err(PluginError::from)?;
    if &hello[..4] != MAGIC {
        return Err(PluginError::Protocol("bad handshake magic".into()).into());
    }
    let field = |i: usize| u32::from_le_bytes(hello[i..i + 4].try_into().unwrap());
    let geometry = Geometry {
        height: field(4),
        width: field(8),
        steps: field(12),
    };
    let accepted = geometry.height > 0 && geometry.width > 0 && handler.accept(geometry);
    writer.write_all(MAGIC).map_err(PluginError::from)?;
    writer.write_all(&[accepted as u8]).map_err(PluginError::from)?;
    writer.flush().map_err(PluginError::from)?;
    if !accepted {
        return Ok(());
    }
    let (h, w) = geometry.shape();
    let mut payload = vec![0u8; geometry.payload_len()];
    loop {
        let mut op = [0u8; 1];
        match reader.read(&mut op) {
            Ok(0) => return Ok(()),
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(PluginError::from(e).into()),
        }
        match op[0] {
            OP_PREDICT => {
                let mut t = [0u8; 4];
                reader.read_exact(&mut t).map_err(PluginError::from)?;
                reader.read_exact(&mut payload).map_err(PluginError::from)?;
                let y = ComplexImage::new(h, w, decode_complex_f32(&payload))?;
                let eps = handler.predict(&y, u32::from_le_bytes(t) as usize)?;
                eps.ensure_shape((h, w))?;
                let mut frame = Vec::with_capacity(1 + payload.len());
                frame.push(OP_PREDICTION);
                encode_complex_f32(eps.data(), &mut frame);
                writer.write_all(&frame).map_err(PluginError::from)?;
                writer.flush().map_err(PluginError::from)?;
            }
            OP_SHUTDOWN => return Ok(()),
            other => {
                return Err(PluginError::Protocol(format!("unknown opcode {other:#04x}")).into())
            }
        }
    }
}
