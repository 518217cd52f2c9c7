use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{Frame, Message, WireError, DEFAULT_MAX_PAYLOAD};
use super::{prepare, record, HarnessError, JobSpec, Prepared, TranscriptLog};
use crate::linalg::FieldMatrix;
use crate::schemes::{decode, AnswerSet};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(60);

/// Worker endpoints, one per server, in server order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerRegistry {
    endpoints: Vec<String>,
}

impl WorkerRegistry {
    pub fn new(endpoints: Vec<String>) -> Self {
        Self { endpoints }
    }

    /// One `host:port` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut endpoints = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.rsplit_once(':') {
                Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                    endpoints.push(line.to_string())
                }
                _ => {
                    return Err(HarnessError::Config(format!(
                        "registry line {}: `{line}` is not host:port",
                        i + 1
                    )))
                }
            }
        }
        Ok(Self { endpoints })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn endpoints(&self) -> &[String] {
        &self.endpoints
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    /// Whether each worker currently accepts TCP connections.
    pub fn health(&self) -> Vec<bool> {
        self.endpoints
            .iter()
            .map(|e| resolve(e).is_ok_and(|a| TcpStream::connect_timeout(&a, CONNECT_TIMEOUT).is_ok()))
            .collect()
    }
}

fn resolve(endpoint: &str) -> std::io::Result<SocketAddr> {
    endpoint.to_socket_addrs()?.next().ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::NotFound, "no address for endpoint")
    })
}

fn exchange(endpoint: &str, request: &Frame, server: usize) -> Result<Frame, HarnessError> {
    let unreachable = |source| HarnessError::Unreachable {
        server: server + 1,
        addr: endpoint.to_string(),
        source,
    };
    let protocol = |source| HarnessError::Protocol {
        server: server + 1,
        addr: endpoint.to_string(),
        source,
    };
    let addr = resolve(endpoint).map_err(unreachable)?;
    let stream = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(unreachable)?;
    let _ = stream.set_nodelay(true);
    stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(unreachable)?;
    stream.set_write_timeout(Some(IO_TIMEOUT)).map_err(unreachable)?;
    let mut writer = BufWriter::new(stream.try_clone().map_err(unreachable)?);
    request
        .write_to(&mut writer)
        .map_err(|e| protocol(WireError::from(e)))?;
    let mut reader = BufReader::new(stream);
    Frame::read_from(&mut reader, DEFAULT_MAX_PAYLOAD)
        .map_err(protocol)?
        .ok_or_else(|| protocol(WireError::Truncated))
}

/// Sends every share to its worker concurrently and waits for all answers.
pub fn dispatch_distributed(
    job: &JobSpec,
    registry: &WorkerRegistry,
) -> Result<(AnswerSet, TranscriptLog), HarnessError> {
    let n = job.plan.params().n_servers();
    if registry.len() != n {
        return Err(HarnessError::Config(format!(
            "plan has {n} servers but the registry lists {} workers",
            registry.len()
        )));
    }
    let Prepared {
        layout,
        requests,
        mut log,
    } = prepare(job)?;
    let start = Instant::now();
    let replies: Vec<Result<Frame, HarnessError>> = thread::scope(|scope| {
        let handles: Vec<_> = requests
            .iter()
            .zip(registry.endpoints())
            .enumerate()
            .map(|(server, (request, endpoint))| scope.spawn(move || exchange(endpoint, &request.0, server)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("dispatch thread panicked"))
            .collect()
    });
    let mut answers = AnswerSet::new(layout);
    for (server, (reply, request)) in replies.into_iter().zip(&requests).enumerate() {
        let reply = reply?;
        let endpoint = &registry.endpoints()[server];
        let answer: FieldMatrix = match Message::from_frame(&reply) {
            Ok(Message::Answer(z)) => z,
            Ok(Message::Error(message)) => {
                return Err(HarnessError::Remote {
                    server: server + 1,
                    addr: endpoint.clone(),
                    message,
                })
            }
            Ok(_) => {
                return Err(HarnessError::Protocol {
                    server: server + 1,
                    addr: endpoint.clone(),
                    source: WireError::Unexpected(reply.kind),
                })
            }
            Err(source) => {
                return Err(HarnessError::Protocol {
                    server: server + 1,
                    addr: endpoint.clone(),
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

/// Same contract as [`run_local`](super::run_local), over TCP.
pub fn run_distributed(
    job: &JobSpec,
    registry: &WorkerRegistry,
) -> Result<(FieldMatrix, TranscriptLog), HarnessError> {
    let (answers, mut log) = dispatch_distributed(job, registry)?;
    let start = Instant::now();
    let product = decode(&job.plan, &answers)?;
    log.timings.decode = start.elapsed();
    Ok((product, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::harness::worker::{spawn_worker, WorkerConfig};
    use crate::harness::{run_local, KeySource};
    use crate::schemes::{plan_one_sided, SchemeKind, SchemeParams};
    use std::net::TcpListener;

    fn job(n: usize, ell: usize) -> JobSpec {
        let field = PrimeField::new(101).unwrap();
        let plan = plan_one_sided(&SchemeParams::new(SchemeKind::OneSided, n, ell, field).unwrap()).unwrap();
        let a = FieldMatrix::from_rows(field, &[[1u64, 2], [3, 4], [5, 6], [7, 8]]);
        let b = FieldMatrix::from_rows(field, &[[1u64, 0], [2, 1]]);
        JobSpec::new(plan, a, b, KeySource::Seeded(42))
    }

    #[test]
    fn registry_parsing() {
        let r = WorkerRegistry::parse("# fleet\n127.0.0.1:9000\n\nlocalhost:9001\n").unwrap();
        assert_eq!(r.endpoints(), ["127.0.0.1:9000", "localhost:9001"]);
        assert!(WorkerRegistry::parse("127.0.0.1\n").is_err());
        assert!(WorkerRegistry::parse("host:70000\n").is_err());
    }

    #[test]
    fn wrong_worker_count_is_a_config_error() {
        let registry = WorkerRegistry::new(vec!["127.0.0.1:1".into(); 3]);
        assert!(matches!(
            run_distributed(&job(4, 2), &registry),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn unreachable_worker_fails_the_job() {
        let workers: Vec<_> = (0..3)
            .map(|_| spawn_worker("127.0.0.1:0", WorkerConfig::default()).unwrap())
            .collect();
        // A port that was bound and released, so nothing listens there.
        let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let mut endpoints: Vec<String> = workers.iter().map(|w| w.local_addr().to_string()).collect();
        endpoints.push(dead.to_string());
        let err = run_distributed(&job(4, 2), &WorkerRegistry::new(endpoints)).unwrap_err();
        assert!(matches!(err, HarnessError::Unreachable { server: 4, .. }), "{err}");
        assert!(registry_health_reports_dead(dead));
    }

    fn registry_health_reports_dead(dead: SocketAddr) -> bool {
        WorkerRegistry::new(vec![dead.to_string()]).health() == vec![false]
    }

    #[test]
    fn distributed_matches_local() {
        let workers: Vec<_> = (0..4)
            .map(|_| spawn_worker("127.0.0.1:0", WorkerConfig::default()).unwrap())
            .collect();
        let registry = WorkerRegistry::new(workers.iter().map(|w| w.local_addr().to_string()).collect());
        assert!(registry.health().iter().all(|&h| h));
        let job = job(4, 2);
        let (remote, remote_log) = run_distributed(&job, &registry).unwrap();
        let (local, local_log) = run_local(&job).unwrap();
        assert_eq!(remote, local);
        assert_eq!(remote_log.summary(), local_log.summary());
        assert_eq!(remote, job.a.matmul(&job.b).unwrap());
    }
}
