//! TCP transport for the bus.
//!
//! A client opens a connection and sends one `subscribe` frame whose
//! payload is `{"prefix": "..."}`. The server answers with a `subscribed`
//! frame and then forwards every matching bus message as a wire frame.

use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

use crate::io::bus::{Bus, Message, RecvError};
use crate::io::wire::{read_frame, read_message, write_frame, write_message, WireError};

const SUBSCRIBE: &str = "subscribe";
const SUBSCRIBED: &str = "subscribed";
const POLL: Duration = Duration::from_millis(20);

/// Running server; dropping it stops accepting and closes client streams.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Serves `bus` on `bind` (use port 0 for an ephemeral port).
pub fn serve(bus: Bus, bind: impl ToSocketAddrs) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = thread::spawn(move || {
        let mut clients = Vec::new();
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let bus = bus.clone();
                    let flag = flag.clone();
                    clients.push(thread::spawn(move || {
                        let _ = handle_client(stream, &bus, &flag);
                    }));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(_) => thread::sleep(POLL),
            }
        }
        for c in clients {
            let _ = c.join();
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
    })
}

fn handle_client(stream: TcpStream, bus: &Bus, stop: &AtomicBool) -> Result<(), WireError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let Some((topic, payload)) = read_frame(&mut reader)? else {
        return Ok(());
    };
    if topic != SUBSCRIBE {
        return Err(WireError::Topic(format!("expected subscribe frame, got {topic:?}")));
    }
    let request: Value = serde_json::from_slice(&payload).map_err(|e| WireError::Payload(e.to_string()))?;
    let prefix = request["prefix"].as_str().unwrap_or("").to_owned();
    let sub = bus.subscribe(&prefix);
    let mut out = BufWriter::new(stream);
    write_frame(&mut out, SUBSCRIBED, json!({ "prefix": prefix }).to_string().as_bytes())?;
    out.flush()?;
    while !stop.load(Ordering::SeqCst) {
        match sub.recv_timeout(POLL) {
            Ok(m) => {
                write_message(&mut out, &m)?;
                // batch whatever is already queued before flushing
                while let Some(m) = sub.try_recv() {
                    write_message(&mut out, &m)?;
                }
                out.flush()?;
            }
            Err(RecvError::Timeout) => {}
            Err(RecvError::Closed) => break,
        }
    }
    out.flush()?;
    Ok(())
}

/// Client side of a TCP subscription.
pub struct NetSubscription {
    reader: BufReader<TcpStream>,
}

impl NetSubscription {
    /// Connects and waits until the server has registered the subscription.
    pub fn connect(addr: impl ToSocketAddrs, prefix: &str) -> Result<Self, WireError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        write_frame(&mut stream, SUBSCRIBE, json!({ "prefix": prefix }).to_string().as_bytes())?;
        let mut reader = BufReader::new(stream);
        match read_frame(&mut reader)? {
            Some((t, _)) if t == SUBSCRIBED => Ok(Self { reader }),
            _ => Err(WireError::Topic("server did not acknowledge the subscription".into())),
        }
    }

    /// Next message; `None` when the server closes the stream.
    pub fn recv(&mut self) -> Result<Option<Message>, WireError> {
        read_message(&mut self.reader)
    }
}

impl Iterator for NetSubscription {
    type Item = Result<Message, WireError>;
    fn next(&mut self) -> Option<Self::Item> {
        self.recv().transpose()
    }
}
