//! Job execution: the in-process simulator and the TCP coordinator share
//! the same frame encoding, so both put identical bytes on the "wire".

mod coordinator;
pub mod wire;
pub mod worker;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::audit::{pack_view, AuditDims, CollusionSet, ViewSource};
use crate::field::PrimeField;
use crate::linalg::FieldMatrix;
use crate::schemes::{
    decode, encode, encode_with_keys, AnswerSet, KeyMaterial, ProductLayout, Rate, SchemeError,
    SchemePlan, ShareSet,
};

pub use coordinator::{dispatch_distributed, run_distributed, WorkerRegistry};
use wire::{Frame, Message, WireError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("worker {server} ({addr}) unreachable: {source}")]
    Unreachable {
        server: usize,
        addr: String,
        source: std::io::Error,
    },
    #[error("protocol error from worker {server} ({addr}): {source}")]
    Protocol {
        server: usize,
        addr: String,
        source: WireError,
    },
    #[error("worker {server} ({addr}) reported: {message}")]
    Remote {
        server: usize,
        addr: String,
        message: String,
    },
    #[error("transcript capture was not enabled for this job")]
    CaptureDisabled,
    #[error("captured frame for server {server}: {source}")]
    Capture { server: usize, source: WireError },
}

/// Where the encoding keys come from.
#[derive(Debug, Clone)]
pub enum KeySource {
    /// Reproducible keys from a ChaCha20 stream.
    Seeded(u64),
    /// Fresh keys from operating-system entropy.
    Entropy,
    /// Exactly these keys; used by the auditor.
    Fixed(KeyMaterial),
}

/// One multiplication job. For one-sided plans `b` is the public matrix.
#[derive(Debug, Clone)]
pub struct JobSpec {
    pub plan: SchemePlan,
    pub a: FieldMatrix,
    pub b: FieldMatrix,
    pub keys: KeySource,
    /// Keep the exact upload bytes for each server in the transcript.
    pub capture: bool,
}

impl JobSpec {
    pub fn new(plan: SchemePlan, a: FieldMatrix, b: FieldMatrix, keys: KeySource) -> Self {
        Self {
            plan,
            a,
            b,
            keys,
            capture: false,
        }
    }

    pub fn with_capture(mut self) -> Self {
        self.capture = true;
        self
    }

    fn encode(&self) -> Result<ShareSet, SchemeError> {
        match &self.keys {
            KeySource::Seeded(seed) => {
                encode(&self.plan, &self.a, &self.b, &mut ChaCha20Rng::seed_from_u64(*seed))
            }
            KeySource::Entropy => encode(&self.plan, &self.a, &self.b, &mut ChaCha20Rng::from_os_rng()),
            KeySource::Fixed(keys) => encode_with_keys(&self.plan, &self.a, &self.b, keys),
        }
    }
}

/// Bytes exchanged with one server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerTranscript {
    /// 0-based server index.
    pub server: usize,
    /// Entries of the encoded share(s) times 8.
    pub upload_share_bytes: u64,
    /// Entries of the public `B` times 8; zero for two-sided schemes.
    pub upload_public_b_bytes: u64,
    /// Full length of the request frame.
    pub upload_frame_bytes: u64,
    /// Entries of the answer times 8.
    pub download_bytes: u64,
    pub download_frame_bytes: u64,
    /// Exact request frame, when capture is on.
    pub captured_upload: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimings {
    pub encode: Duration,
    pub dispatch: Duration,
    pub decode: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLog {
    pub plan_summary: String,
    pub servers: Vec<ServerTranscript>,
    /// Entries of the logical product times 8.
    pub desired_bytes: u64,
    pub timings: PhaseTimings,
}

impl TranscriptLog {
    fn new(plan: &SchemePlan, layout: &ProductLayout) -> Self {
        let p = plan.params();
        Self {
            plan_summary: format!(
                "{} N={} l={} q={}",
                plan.kind(),
                p.n_servers(),
                p.n_colluding(),
                p.field().modulus()
            ),
            servers: Vec::new(),
            desired_bytes: (layout.rows * layout.cols * 8) as u64,
            timings: PhaseTimings::default(),
        }
    }

    pub fn total_download(&self) -> u64 {
        self.servers.iter().map(|s| s.download_bytes).sum()
    }

    pub fn total_upload(&self) -> u64 {
        self.servers.iter().map(|s| s.upload_share_bytes).sum()
    }

    /// Desired bytes over downloaded bytes. Public `B` uploads are not part
    /// of the denominator.
    pub fn empirical_rate(&self) -> Rate {
        Rate::new(self.desired_bytes, self.total_download().max(1))
    }

    /// Deterministic text summary; timings are left out so seeded runs
    /// reproduce it exactly.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "job {}", self.plan_summary);
        for t in &self.servers {
            let _ = writeln!(
                s,
                "server {}: upload {} B share + {} B public ({} B framed), download {} B ({} B framed)",
                t.server + 1,
                t.upload_share_bytes,
                t.upload_public_b_bytes,
                t.upload_frame_bytes,
                t.download_bytes,
                t.download_frame_bytes
            );
        }
        let rate = self.empirical_rate();
        let _ = writeln!(
            s,
            "desired {} B, downloaded {} B, empirical rate {}/{}",
            self.desired_bytes,
            self.total_download(),
            rate.numer(),
            rate.denom()
        );
        s
    }

    pub fn timings_summary(&self) -> String {
        let t = &self.timings;
        format!(
            "encode {:.3} ms, dispatch {:.3} ms, decode {:.3} ms",
            t.encode.as_secs_f64() * 1e3,
            t.dispatch.as_secs_f64() * 1e3,
            t.decode.as_secs_f64() * 1e3
        )
    }
}

/// Request frame for each server, in server order.
fn request_frames(shares: &ShareSet) -> Result<Vec<(Frame, u64, u64)>, SchemeError> {
    shares
        .shares
        .iter()
        .map(|share| {
            let (msg, share_entries, public_entries) = match (&share.b, &shares.public_b) {
                (Some(b), _) => (
                    Message::ShareFully {
                        a: share.a.clone(),
                        b: b.clone(),
                    },
                    share.a.len() + b.len(),
                    0,
                ),
                (None, Some(b)) => (
                    Message::ShareOneSided {
                        a: share.a.clone(),
                        b: b.clone(),
                    },
                    share.a.len(),
                    b.len(),
                ),
                (None, None) => return Err(SchemeError::MissingPublicB),
            };
            Ok((msg.to_frame(), share_entries as u64 * 8, public_entries as u64 * 8))
        })
        .collect()
}

pub(crate) struct Prepared {
    pub layout: ProductLayout,
    pub requests: Vec<(Frame, u64, u64)>,
    pub log: TranscriptLog,
}

pub(crate) fn prepare(job: &JobSpec) -> Result<Prepared, HarnessError> {
    let start = Instant::now();
    let shares = job.encode()?;
    let requests = request_frames(&shares)?;
    let mut log = TranscriptLog::new(&job.plan, &shares.layout);
    log.timings.encode = start.elapsed();
    Ok(Prepared {
        layout: shares.layout,
        requests,
        log,
    })
}

pub(crate) fn record(
    log: &mut TranscriptLog,
    server: usize,
    request: &(Frame, u64, u64),
    reply: &Frame,
    answer: &FieldMatrix,
    capture: bool,
) {
    let bytes = request.0.to_bytes();
    log.servers.push(ServerTranscript {
        server,
        upload_share_bytes: request.1,
        upload_public_b_bytes: request.2,
        upload_frame_bytes: bytes.len() as u64,
        download_bytes: answer.len() as u64 * 8,
        download_frame_bytes: reply.to_bytes().len() as u64,
        captured_upload: capture.then_some(bytes),
    });
}

/// Encodes and collects every answer in process, without decoding. Works
/// for audit-only plans whose points repeat.
pub fn dispatch_local(job: &JobSpec) -> Result<(AnswerSet, TranscriptLog), HarnessError> {
    let Prepared {
        layout,
        requests,
        mut log,
    } = prepare(job)?;
    let start = Instant::now();
    let mut answers = AnswerSet::new(layout);
    for (server, request) in requests.iter().enumerate() {
        // Round-trip through bytes, exactly as a remote worker sees it.
        let received = Frame::from_bytes(&request.0.to_bytes()).map_err(|source| HarnessError::Protocol {
            server: server + 1,
            addr: "local".into(),
            source,
        })?;
        let reply = worker::answer_for(&received).to_frame();
        let answer = match Message::from_frame(&reply) {
            Ok(Message::Answer(z)) => z,
            Ok(Message::Error(message)) => {
                return Err(HarnessError::Remote {
                    server: server + 1,
                    addr: "local".into(),
                    message,
                })
            }
            Ok(_) => unreachable!("workers only answer or fail"),
            Err(source) => {
                return Err(HarnessError::Protocol {
                    server: server + 1,
                    addr: "local".into(),
                    source,
                })
            }
        };
        record(&mut log, server, request, &reply, &answer, job.capture);
        answers.insert(server, answer)?;
    }
    log.timings.dispatch = start.elapsed();
    Ok((answers, log))
}

/// Encode, serve every share in process, decode.
pub fn run_local(job: &JobSpec) -> Result<(FieldMatrix, TranscriptLog), HarnessError> {
    let (answers, mut log) = dispatch_local(job)?;
    let start = Instant::now();
    let product = decode(&job.plan, &answers)?;
    log.timings.decode = start.elapsed();
    Ok((product, log))
}

/// A share as one server received it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedShare {
    pub server: usize,
    pub a: FieldMatrix,
    /// `B̃_i` for two-sided schemes.
    pub b: Option<FieldMatrix>,
    /// The public `B` for one-sided schemes.
    pub public_b: Option<FieldMatrix>,
}

/// Decodes a captured request frame.
pub fn decode_share_frame(server: usize, bytes: &[u8]) -> Result<CapturedShare, HarnessError> {
    let wrap = |source| HarnessError::Capture { server: server + 1, source };
    let frame = Frame::from_bytes(bytes).map_err(wrap)?;
    match Message::from_frame(&frame).map_err(wrap)? {
        Message::ShareOneSided { a, b } => Ok(CapturedShare {
            server,
            a,
            b: None,
            public_b: Some(b),
        }),
        Message::ShareFully { a, b } => Ok(CapturedShare {
            server,
            a,
            b: Some(b),
            public_b: None,
        }),
        _ => Err(wrap(WireError::Unexpected(frame.kind))),
    }
}

/// What the servers in `set` pooled, recovered from the captured bytes.
pub fn adversary_view(log: &TranscriptLog, set: &CollusionSet) -> Result<Vec<CapturedShare>, HarnessError> {
    set.indices()
        .iter()
        .map(|&i| {
            let t = log
                .servers
                .iter()
                .find(|t| t.server == i)
                .ok_or_else(|| HarnessError::Config(format!("no transcript for server {}", i + 1)))?;
            let bytes = t.captured_upload.as_ref().ok_or(HarnessError::CaptureDisabled)?;
            decode_share_frame(i, bytes)
        })
        .collect()
}

/// Views drawn from real harness transcripts, one local job per key
/// assignment. Slow, but it audits the bytes the wire actually carries.
pub struct HarnessViews {
    plan: SchemePlan,
    dims: AuditDims,
    layout: ProductLayout,
    key_len: usize,
}

impl HarnessViews {
    pub fn new(plan: SchemePlan, dims: AuditDims) -> Result<Self, HarnessError> {
        let b_cols = if plan.encodes_b() { dims.cols } else { 1 };
        let layout = ProductLayout::for_plan(&plan, dims.rows, dims.inner, b_cols)?;
        let key_len = KeyMaterial::entry_count(&plan, &layout);
        Ok(Self {
            plan,
            dims,
            layout,
            key_len,
        })
    }

    fn split_secret(&self, secret: &[u64]) -> (FieldMatrix, FieldMatrix) {
        let f = self.field();
        let d = self.dims;
        let a_len = d.rows * d.inner;
        let a = FieldMatrix::new(f, d.rows, d.inner, secret[..a_len].to_vec()).expect("secret shape");
        let b = if self.plan.encodes_b() {
            FieldMatrix::new(f, d.inner, d.cols, secret[a_len..].to_vec()).expect("secret shape")
        } else {
            FieldMatrix::zeros(f, d.inner, 1)
        };
        (a, b)
    }
}

impl ViewSource for HarnessViews {
    fn field(&self) -> PrimeField {
        self.plan.params().field()
    }

    fn n_servers(&self) -> usize {
        self.plan.params().n_servers()
    }

    fn secret_len(&self) -> usize {
        let d = self.dims;
        d.rows * d.inner + if self.plan.encodes_b() { d.inner * d.cols } else { 0 }
    }

    fn key_len(&self) -> usize {
        self.key_len
    }

    fn view_len(&self, set: &CollusionSet) -> usize {
        let a = self.layout.a_block_rows * self.layout.inner;
        let b = if self.plan.encodes_b() {
            self.layout.inner * self.layout.b_block_cols
        } else {
            0
        };
        set.len() * (a + b)
    }

    fn views(&self, set: &CollusionSet, secret: &[u64]) -> Vec<u128> {
        let q = self.field().modulus();
        let (a, b) = self.split_secret(secret);
        let count = (q as u128).pow(self.key_len as u32) as usize;
        let mut keys = vec![0u64; self.key_len];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let material = KeyMaterial::from_flat(&self.plan, &self.layout, &keys).expect("key layout");
            let job = JobSpec::new(self.plan.clone(), a.clone(), b.clone(), KeySource::Fixed(material))
                .with_capture();
            let (_, log) = dispatch_local(&job).expect("audit job runs");
            let view: Vec<u64> = adversary_view(&log, set)
                .expect("capture is on")
                .iter()
                .flat_map(|s| {
                    let mut v = s.a.entries().to_vec();
                    if let Some(b) = &s.b {
                        v.extend_from_slice(b.entries());
                    }
                    v
                })
                .collect();
            out.push(pack_view(q, &view));
            for k in keys.iter_mut() {
                *k += 1;
                if *k < q {
                    break;
                }
                *k = 0;
            }
        }
        out
    }
}
