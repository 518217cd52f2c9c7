//! An honest-but-curious server: multiplies whatever share it receives and
//! replies with the product. It holds no state between jobs.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{info, warn};

use super::wire::{Frame, Message, WireError, DEFAULT_MAX_PAYLOAD};

/// The server-side computation on one request frame.
pub fn answer_for(frame: &Frame) -> Message {
    let result = Message::from_frame(frame).and_then(|msg| match msg {
        Message::ShareOneSided { a, b } | Message::ShareFully { a, b } => {
            a.matmul(&b).map(Message::Answer).map_err(WireError::from)
        }
        Message::Answer(_) | Message::Error(_) => Err(WireError::Unexpected(frame.kind)),
    });
    result.unwrap_or_else(|e| Message::Error(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// Keep a copy of every received frame, for adversary-view tests.
    pub capture: bool,
    pub max_payload: u64,
    pub read_timeout: Option<Duration>,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            capture: false,
            max_payload: DEFAULT_MAX_PAYLOAD,
            read_timeout: Some(Duration::from_secs(30)),
        }
    }
}

#[derive(Default)]
struct Shared {
    stop: AtomicBool,
    jobs: AtomicU64,
    captured: Mutex<Vec<Vec<u8>>>,
}

/// A running worker. Dropping the handle stops it.
pub struct WorkerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl WorkerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn jobs_served(&self) -> u64 {
        self.shared.jobs.load(Ordering::SeqCst)
    }

    /// Raw bytes of every frame received so far, in arrival order.
    pub fn captured_frames(&self) -> Vec<Vec<u8>> {
        self.shared.captured.lock().expect("capture lock").clone()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(t) = self.thread.take() {
            self.shared.stop.store(true, Ordering::SeqCst);
            // Wake the accept loop.
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and serves connections on background threads.
pub fn spawn_worker<A: ToSocketAddrs>(addr: A, config: WorkerConfig) -> std::io::Result<WorkerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared::default());
    let loop_shared = Arc::clone(&shared);
    let thread = thread::Builder::new()
        .name(format!("smm-worker-{local}"))
        .spawn(move || accept_loop(listener, config, loop_shared))?;
    Ok(WorkerHandle {
        addr: local,
        shared,
        thread: Some(thread),
    })
}

fn accept_loop(listener: TcpListener, config: WorkerConfig, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(stream) => {
                let config = config.clone();
                let shared = Arc::clone(&shared);
                thread::spawn(move || serve_connection(stream, &config, &shared));
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn serve_connection(stream: TcpStream, config: &WorkerConfig, shared: &Shared) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    let _ = stream.set_read_timeout(config.read_timeout);
    let _ = stream.set_nodelay(true);
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(write_half);
    loop {
        let frame = match Frame::read_from(&mut reader, config.max_payload) {
            Ok(Some(frame)) => frame,
            Ok(None) => return,
            Err(e) => {
                warn!("{peer}: {e}; closing connection");
                let _ = Message::Error(e.to_string()).to_frame().write_to(&mut writer);
                return;
            }
        };
        if config.capture {
            shared
                .captured
                .lock()
                .expect("capture lock")
                .push(frame.to_bytes());
        }
        let reply = answer_for(&frame);
        let failed = matches!(reply, Message::Error(_));
        if let Message::Error(msg) = &reply {
            warn!("{peer}: rejected request: {msg}");
        } else {
            let job = shared.jobs.fetch_add(1, Ordering::SeqCst) + 1;
            info!("{peer}: job {job} answered ({} payload bytes)", frame.payload.len());
        }
        if reply.to_frame().write_to(&mut writer).is_err() || failed {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::linalg::FieldMatrix;
    use std::io::{Read, Write};

    fn m(rows: &[&[u64]]) -> FieldMatrix {
        FieldMatrix::from_rows(PrimeField::new(101).unwrap(), rows)
    }

    #[test]
    fn answers_share_frames() {
        let frame = Message::ShareFully {
            a: m(&[&[2, 3]]),
            b: m(&[&[4], &[5]]),
        }
        .to_frame();
        assert_eq!(answer_for(&frame), Message::Answer(m(&[&[23]])));
        let bad = Message::ShareOneSided {
            a: m(&[&[2, 3]]),
            b: m(&[&[4]]),
        }
        .to_frame();
        assert!(matches!(answer_for(&bad), Message::Error(_)));
        assert!(matches!(answer_for(&Message::Answer(m(&[&[1]])).to_frame()), Message::Error(_)));
    }

    #[test]
    fn bad_magic_gets_error_and_worker_survives() {
        let worker = spawn_worker("127.0.0.1:0", WorkerConfig::default()).unwrap();
        let mut s = TcpStream::connect(worker.local_addr()).unwrap();
        s.write_all(b"JUNKJUNKJUNKJUNK").unwrap();
        let mut reply = Vec::new();
        s.read_to_end(&mut reply).unwrap();
        let frame = Frame::from_bytes(&reply).unwrap();
        assert!(matches!(Message::from_frame(&frame).unwrap(), Message::Error(e) if e.contains("magic")));

        let mut s = TcpStream::connect(worker.local_addr()).unwrap();
        let req = Message::ShareFully {
            a: m(&[&[2]]),
            b: m(&[&[3]]),
        };
        req.to_frame().write_to(&mut s).unwrap();
        let frame = Frame::read_from(&mut s, 1 << 20).unwrap().unwrap();
        assert_eq!(Message::from_frame(&frame).unwrap(), Message::Answer(m(&[&[6]])));
        assert_eq!(worker.jobs_served(), 1);
        worker.stop();
    }

    #[test]
    fn capture_records_raw_frames() {
        let worker = spawn_worker(
            "127.0.0.1:0",
            WorkerConfig {
                capture: true,
                ..WorkerConfig::default()
            },
        )
        .unwrap();
        let req = Message::ShareFully {
            a: m(&[&[7]]),
            b: m(&[&[1]]),
        }
        .to_frame();
        let mut s = TcpStream::connect(worker.local_addr()).unwrap();
        req.write_to(&mut s).unwrap();
        Frame::read_from(&mut s, 1 << 20).unwrap().unwrap();
        drop(s);
        assert_eq!(worker.captured_frames(), vec![req.to_bytes()]);
    }
}
