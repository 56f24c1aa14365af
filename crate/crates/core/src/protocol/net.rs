use std::fmt;
use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{MessageType, Reply, WireMessage, MAX_LINE};
use crate::error::{Error, Result};
use crate::modengine::SubtletyLevel;
use crate::server::SessionHandle;

pub const DEFAULT_PORT: u16 = 48100;

const POLL: Duration = Duration::from_millis(50);
const WRITE_TIMEOUT: Duration = Duration::from_secs(2);

/// Where the listener binds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(SocketAddr),
    #[cfg(unix)]
    Unix(PathBuf),
}

impl Default for Endpoint {
    fn default() -> Self {
        Endpoint::Tcp(SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)))
    }
}

impl FromStr for Endpoint {
    type Err = Error;
    /// `HOST:PORT`, `tcp:HOST:PORT`, `unix:PATH`, or a bare port number.
    fn from_str(s: &str) -> Result<Self> {
        #[cfg(unix)]
        if let Some(p) = s.strip_prefix("unix:") {
            return Ok(Endpoint::Unix(PathBuf::from(p)));
        }
        let s = s.strip_prefix("tcp:").unwrap_or(s);
        if let Ok(port) = s.parse::<u16>() {
            return Ok(Endpoint::Tcp(SocketAddr::from(([127, 0, 0, 1], port))));
        }
        s.parse().map(Endpoint::Tcp).map_err(|_| Error::Parameter(format!("bad endpoint {s:?}; expected HOST:PORT or unix:PATH")))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "{a}"),
            #[cfg(unix)]
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
        }
    }
}

/// What the listener does with decoded messages.
pub trait Handler: Send + Sync {
    fn signal(&self, level: Option<SubtletyLevel>, source: &str) -> Result<()>;
    fn set_level(&self, level: SubtletyLevel) -> Result<()>;
}

impl Handler for SessionHandle {
    fn signal(&self, level: Option<SubtletyLevel>, source: &str) -> Result<()> {
        SessionHandle::signal(self, level, source).map(|_| ())
    }

    fn set_level(&self, level: SubtletyLevel) -> Result<()> {
        SessionHandle::set_level(self, level)
    }
}

/// Answers one decoded line.
pub fn respond(handler: &dyn Handler, line: &[u8]) -> Reply {
    let Ok(text) = std::str::from_utf8(line) else { return Reply::Error("line is not valid UTF-8".into()) };
    let msg = match WireMessage::decode(text) {
        Ok(m) => m,
        Err(Error::Protocol(e)) => return Reply::Error(e),
        Err(e) => return Reply::Error(e.to_string()),
    };
    let level = msg.level.map(|l| SubtletyLevel::try_from(l).expect("validated"));
    let r = match msg.kind {
        MessageType::Ping => return Reply::Pong,
        MessageType::Signal => handler.signal(level, msg.source.as_deref().unwrap_or("client")),
        MessageType::SetLevel => handler.set_level(level.expect("validated")),
    };
    match r {
        Ok(()) => Reply::Ok,
        Err(e) => Reply::Error(e.to_string()),
    }
}

trait Conn: Read + Write + Send {
    fn set_timeouts(&self) -> io::Result<()>;
}

impl Conn for TcpStream {
    fn set_timeouts(&self) -> io::Result<()> {
        self.set_nonblocking(false)?;
        self.set_nodelay(true)?;
        self.set_read_timeout(Some(POLL))?;
        self.set_write_timeout(Some(WRITE_TIMEOUT))
    }
}

#[cfg(unix)]
impl Conn for std::os::unix::net::UnixStream {
    fn set_timeouts(&self) -> io::Result<()> {
        self.set_nonblocking(false)?;
        self.set_read_timeout(Some(POLL))?;
        self.set_write_timeout(Some(WRITE_TIMEOUT))
    }
}

enum Bound {
    Tcp(TcpListener),
    #[cfg(unix)]
    Unix(std::os::unix::net::UnixListener, PathBuf),
}

/// A running listener; shuts down when dropped.
pub struct Listener {
    endpoint: Endpoint,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    #[cfg(unix)]
    socket_path: Option<PathBuf>,
}

impl Listener {
    /// The bound endpoint (with the actual port when 0 was asked for).
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        #[cfg(unix)]
        if let Some(p) = self.socket_path.take() {
            let _ = std::fs::remove_file(p);
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Binds `endpoint` and serves clients on background threads. Binding to a
/// non-loopback address needs `allow_remote`.
pub fn serve(endpoint: &Endpoint, handler: Arc<dyn Handler>, allow_remote: bool) -> Result<Listener> {
    let busy = |e: io::Error| Error::Refused(format!("cannot listen on {endpoint}: {e}"));
    let (bound, actual) = match endpoint {
        Endpoint::Tcp(a) => {
            if !a.ip().is_loopback() && !allow_remote {
                return Err(Error::Refused(format!("{a} is not a loopback address; remote binding must be enabled explicitly")));
            }
            let l = TcpListener::bind(a).map_err(busy)?;
            let actual = Endpoint::Tcp(l.local_addr()?);
            l.set_nonblocking(true)?;
            (Bound::Tcp(l), actual)
        }
        #[cfg(unix)]
        Endpoint::Unix(p) => {
            if p.exists() {
                if std::os::unix::net::UnixStream::connect(p).is_ok() {
                    return Err(busy(io::Error::new(ErrorKind::AddrInUse, "socket in use")));
                }
                std::fs::remove_file(p)?;
            }
            let l = std::os::unix::net::UnixListener::bind(p).map_err(busy)?;
            l.set_nonblocking(true)?;
            (Bound::Unix(l, p.clone()), endpoint.clone())
        }
    };
    let stop = Arc::new(AtomicBool::new(false));
    #[cfg(unix)]
    let socket_path = match &bound {
        Bound::Unix(_, p) => Some(p.clone()),
        _ => None,
    };
    let thread = {
        let stop = Arc::clone(&stop);
        thread::Builder::new().name("listener".into()).spawn(move || accept_loop(bound, handler, stop))?
    };
    Ok(Listener {
        endpoint: actual,
        stop,
        thread: Some(thread),
        #[cfg(unix)]
        socket_path,
    })
}

fn accept_loop(bound: Bound, handler: Arc<dyn Handler>, stop: Arc<AtomicBool>) {
    let mut conns: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let accepted: io::Result<Box<dyn Conn>> = match &bound {
            Bound::Tcp(l) => l.accept().map(|(s, _)| Box::new(s) as Box<dyn Conn>),
            #[cfg(unix)]
            Bound::Unix(l, _) => l.accept().map(|(s, _)| Box::new(s) as Box<dyn Conn>),
        };
        match accepted {
            Ok(c) => {
                let (h, s) = (Arc::clone(&handler), Arc::clone(&stop));
                if let Ok(t) = thread::Builder::new().name("client".into()).spawn(move || serve_conn(c, &*h, &s)) {
                    conns.push(t);
                }
                conns.retain(|t| !t.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for t in conns {
        let _ = t.join();
    }
}

/// Reads newline-terminated lines until EOF, an oversize line, a failed
/// write, or shutdown. A partial line at EOF is discarded.
fn serve_conn(conn: Box<dyn Conn>, handler: &dyn Handler, stop: &AtomicBool) {
    if conn.set_timeouts().is_err() {
        return;
    }
    let mut reader = BufReader::new(conn);
    let mut line = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let chunk = match reader.fill_buf() {
            Ok([]) => return,
            Ok(c) => c,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => continue,
            Err(_) => return,
        };
        let (take, complete) = match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        line.extend_from_slice(&chunk[..take]);
        reader.consume(take);
        if line.len() > MAX_LINE + 1 || (!complete && line.len() > MAX_LINE) {
            // Oversize: give up on this client.
            let _ = reader.get_mut().write_all(Reply::Error("line too long".into()).encode().as_bytes());
            return;
        }
        if !complete {
            continue;
        }
        line.pop();
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        let reply = if line.iter().all(u8::is_ascii_whitespace) { None } else { Some(respond(handler, &line)) };
        line.clear();
        if let Some(r) = reply {
            if reader.get_mut().write_all(r.encode().as_bytes()).is_err() {
                return;
            }
        }
    }
}

/// Blocking client for one connection.
pub struct Client {
    reader: BufReader<Box<dyn Conn>>,
}

impl Client {
    pub fn connect(endpoint: &Endpoint) -> Result<Client> {
        let conn: Box<dyn Conn> = match endpoint {
            Endpoint::Tcp(a) => Box::new(TcpStream::connect_timeout(a, Duration::from_secs(5))?),
            #[cfg(unix)]
            Endpoint::Unix(p) => Box::new(std::os::unix::net::UnixStream::connect(p)?),
        };
        conn.set_timeouts()?;
        Ok(Client { reader: BufReader::new(conn) })
    }

    /// Sends a raw line (a newline is added if missing) and waits for the
    /// reply.
    pub fn send_line(&mut self, line: &str) -> Result<Reply> {
        let mut buf = line.to_string();
        if !buf.ends_with('\n') {
            buf.push('\n');
        }
        let w = self.reader.get_mut();
        w.write_all(buf.as_bytes())?;
        w.flush()?;
        let mut reply = String::new();
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            match self.reader.read_line(&mut reply) {
                Ok(0) => return Err(Error::Protocol("connection closed".into())),
                Ok(_) if reply.ends_with('\n') => return Reply::decode(&reply),
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) && Instant::now() < deadline => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn send(&mut self, msg: &WireMessage) -> Result<Reply> {
        self.send_line(&msg.encode()?)
    }

    /// Round-trip time of one ping.
    pub fn ping(&mut self) -> Result<Duration> {
        let t = Instant::now();
        match self.send(&WireMessage::ping())? {
            Reply::Pong => Ok(t.elapsed()),
            r => Err(Error::Protocol(format!("unexpected reply {r:?}"))),
        }
    }
}
