//! Framed stream transport with injectable per-hop delay and drop, plus the
//! echo-based RTT measurement.

use super::{
    decode_body, encode_body, CommError, EchoPayload, Message, Payload,
    MAX_FRAME_BYTES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

/// Test-only fault injection between the codec and the socket. The
/// production path is the shim with zero delay and zero drop probability,
/// so injected and clean runs exercise identical code.
#[derive(Debug)]
pub struct LinkShim {
    pub send_delay: Duration,
    pub drop_prob: f64,
    rng: ChaCha8Rng,
}

impl Default for LinkShim {
    fn default() -> Self {
        LinkShim::new(Duration::ZERO, 0.0, 0)
    }
}

impl LinkShim {
    pub fn new(send_delay: Duration, drop_prob: f64, seed: u64) -> Self {
        LinkShim {
            send_delay,
            drop_prob,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn should_drop(&mut self) -> bool {
        self.drop_prob > 0.0 && self.rng.random::<f64>() < self.drop_prob
    }
}

/// Writing half of a framed connection. Stamps a strictly increasing `seq`
/// and the monotonic send timestamp on every message.
pub struct FrameWriter<W: Write> {
    writer: W,
    shim: LinkShim,
    next_seq: u64,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(writer: W) -> Self {
        Self::with_shim(writer, LinkShim::default())
    }

    pub fn with_shim(writer: W, shim: LinkShim) -> Self {
        FrameWriter {
            writer,
            shim,
            next_seq: 0,
        }
    }

    /// Sends a payload; returns the stamped message (dropped messages still
    /// consume a sequence number, like a lost packet would).
    pub fn send(&mut self, payload: Payload) -> Result<Message, CommError> {
        let msg = Message {
            seq: self.next_seq,
            ts_us: super::mono_us(),
            payload,
        };
        self.next_seq += 1;
        self.send_prestamped(&msg)?;
        Ok(msg)
    }

    /// Sends an already-stamped message (used by forwarding relays that
    /// keep their own sequence space).
    pub fn send_prestamped(&mut self, msg: &Message) -> Result<(), CommError> {
        if self.shim.should_drop() {
            return Ok(());
        }
        if !self.shim.send_delay.is_zero() {
            std::thread::sleep(self.shim.send_delay);
        }
        let body = encode_body(msg);
        if body.len() > MAX_FRAME_BYTES {
            return Err(CommError::FrameTooLarge(body.len()));
        }
        self.writer.write_all(&(body.len() as u32).to_be_bytes())?;
        self.writer.write_all(&body)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn next_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }
}

/// Reading half of a framed connection.
pub struct FrameReader<R: Read> {
    reader: R,
}

impl<R: Read> FrameReader<R> {
    pub fn new(reader: R) -> Self {
        FrameReader { reader }
    }

    /// Blocks for one complete frame. The declared length is checked
    /// against the cap before any body byte is read.
    pub fn recv(&mut self) -> Result<Message, CommError> {
        let mut prefix = [0u8; 4];
        self.reader.read_exact(&mut prefix)?;
        let declared = u32::from_be_bytes(prefix) as usize;
        if declared > MAX_FRAME_BYTES {
            return Err(CommError::FrameTooLarge(declared));
        }
        let mut body = vec![0u8; declared];
        self.reader.read_exact(&mut body)?;
        decode_body(&body)
    }
}

/// RTT probe outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkStats {
    /// Successful round trips (ms), in probe order.
    pub rtt_ms: Vec<f64>,
    /// Median RTT halved.
    pub one_way_ms: f64,
    pub drops: usize,
}

impl LinkStats {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CommError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["probe", "rtt_ms"])
            .map_err(|e| CommError::Io(e.to_string()))?;
        for (i, rtt) in self.rtt_ms.iter().enumerate() {
            w.write_record([i.to_string(), format!("{rtt}")])
                .map_err(|e| CommError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CommError::Io(e.to_string()))?;
        Ok(())
    }
}

pub fn median(sorted_or_not: &[f64]) -> f64 {
    let mut v = sorted_or_not.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN latencies"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RttConfig {
    pub samples: usize,
    pub timeout: Duration,
}

impl Default for RttConfig {
    fn default() -> Self {
        RttConfig {
            samples: 50,
            timeout: Duration::from_secs(1),
        }
    }
}

/// Echo-based RTT measurement: each probe is timed on the sender's
/// monotonic clock from ECHO send to the matching ECHO_REPLY, and the
/// one-way time is the median RTT divided by two. Timeouts count as drops;
/// more than half dropped makes the link unusable.
///
/// The caller must have armed a read timeout on the underlying stream equal
/// to `config.timeout` (see `TcpStream::set_read_timeout`).
pub fn measure_rtt<R: Read, W: Write>(
    reader: &mut FrameReader<R>,
    writer: &mut FrameWriter<W>,
    config: RttConfig,
) -> Result<LinkStats, CommError> {
    if config.samples < 5 {
        return Err(CommError::Input(format!(
            "rtt needs at least 5 samples, got {}",
            config.samples
        )));
    }
    let mut rtt_ms = Vec::with_capacity(config.samples);
    let mut drops = 0usize;
    for nonce in 0..config.samples as u64 {
        let start = Instant::now();
        writer.send(Payload::Echo(EchoPayload { nonce }))?;
        // Wait for the matching reply, discarding strays from earlier
        // timed-out probes.
        let rtt = loop {
            if start.elapsed() > config.timeout {
                break None;
            }
            match reader.recv() {
                Ok(msg) => match msg.payload {
                    Payload::EchoReply(EchoPayload { nonce: n }) if n == nonce => {
                        break Some(start.elapsed());
                    }
                    _ => continue,
                },
                Err(CommError::Timeout) => break None,
                Err(e) => return Err(e),
            }
        };
        match rtt {
            Some(d) => rtt_ms.push(d.as_secs_f64() * 1e3),
            None => drops += 1,
        }
    }
    if drops * 2 > config.samples {
        return Err(CommError::LinkUnusable {
            drops,
            total: config.samples,
        });
    }
    Ok(LinkStats {
        one_way_ms: median(&rtt_ms) / 2.0,
        drops,
        rtt_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::{TcpListener, TcpStream};
    use std::thread;

    fn echo_server(delay: Duration) -> (std::net::SocketAddr, thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            if let Ok((stream, _)) = listener.accept() {
                let mut reader = FrameReader::new(stream.try_clone().unwrap());
                let mut writer =
                    FrameWriter::with_shim(stream, LinkShim::new(delay, 0.0, 1));
                while let Ok(msg) = reader.recv() {
                    if let Payload::Echo(e) = msg.payload {
                        if writer.send(Payload::EchoReply(e)).is_err() {
                            break;
                        }
                    }
                }
            }
        });
        (addr, handle)
    }

    fn connect(addr: std::net::SocketAddr, delay: Duration) -> (FrameReader<TcpStream>, FrameWriter<TcpStream>) {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_nodelay(true).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(1)))
            .unwrap();
        let reader = FrameReader::new(stream.try_clone().unwrap());
        let writer = FrameWriter::with_shim(stream, LinkShim::new(delay, 0.0, 2));
        (reader, writer)
    }

    #[test]
    fn loopback_rtt_floor_is_below_a_millisecond() {
        let (addr, server) = echo_server(Duration::ZERO);
        let (mut reader, mut writer) = connect(addr, Duration::ZERO);
        let stats = measure_rtt(
            &mut reader,
            &mut writer,
            RttConfig {
                samples: 20,
                timeout: Duration::from_secs(1),
            },
        )
        .unwrap();
        assert_eq!(stats.drops, 0);
        assert!(stats.one_way_ms < 1.0, "one-way {}", stats.one_way_ms);
        drop(reader);
        drop(writer);
        server.join().unwrap();
    }

    #[test]
    fn symmetric_injected_delay_is_recovered() {
        let each_way = Duration::from_millis(5);
        let (addr, server) = echo_server(each_way);
        let (mut reader, mut writer) = connect(addr, each_way);
        let stats = measure_rtt(
            &mut reader,
            &mut writer,
            RttConfig {
                samples: 10,
                timeout: Duration::from_secs(1),
            },
        )
        .unwrap();
        let err = (stats.one_way_ms - 5.0).abs();
        assert!(err <= 0.2 * 5.0 + 0.5, "one-way {}", stats.one_way_ms);
        drop(reader);
        drop(writer);
        server.join().unwrap();
    }

    #[test]
    fn asymmetric_delay_estimates_the_mean_of_both_directions() {
        // 2 ms out, 8 ms back: RTT/2 sees 5 ms and cannot see the asymmetry.
        let (addr, server) = echo_server(Duration::from_millis(8));
        let (mut reader, mut writer) = connect(addr, Duration::from_millis(2));
        let stats = measure_rtt(
            &mut reader,
            &mut writer,
            RttConfig {
                samples: 10,
                timeout: Duration::from_secs(1),
            },
        )
        .unwrap();
        let err = (stats.one_way_ms - 5.0).abs();
        assert!(err <= 0.2 * 5.0 + 0.5, "one-way {}", stats.one_way_ms);
        drop(reader);
        drop(writer);
        server.join().unwrap();
    }

    #[test]
    fn too_few_samples_is_an_input_error() {
        let (addr, server) = echo_server(Duration::ZERO);
        let (mut reader, mut writer) = connect(addr, Duration::ZERO);
        assert!(matches!(
            measure_rtt(
                &mut reader,
                &mut writer,
                RttConfig {
                    samples: 4,
                    timeout: Duration::from_secs(1)
                }
            ),
            Err(CommError::Input(_))
        ));
        drop(writer);
        drop(reader);
        server.join().unwrap();
    }

    #[test]
    fn sequences_increase_per_connection() {
        let (addr, server) = echo_server(Duration::ZERO);
        let (mut reader, mut writer) = connect(addr, Duration::ZERO);
        for expect in 0..5u64 {
            let sent = writer.send(Payload::Echo(EchoPayload { nonce: expect })).unwrap();
            assert_eq!(sent.seq, expect);
            let _ = reader.recv().unwrap();
        }
        drop(reader);
        drop(writer);
        server.join().unwrap();
    }

    #[test]
    fn dropping_link_reports_unusable() {
        let (addr, server) = echo_server(Duration::ZERO);
        let stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_millis(50)))
            .unwrap();
        let mut reader = FrameReader::new(stream.try_clone().unwrap());
        // Drop every outgoing probe.
        let mut writer = FrameWriter::with_shim(stream, LinkShim::new(Duration::ZERO, 1.0, 3));
        let out = measure_rtt(
            &mut reader,
            &mut writer,
            RttConfig {
                samples: 6,
                timeout: Duration::from_millis(60),
            },
        );
        assert!(matches!(out, Err(CommError::LinkUnusable { .. })));
        drop(writer);
        drop(reader);
        server.join().unwrap();
    }

    #[test]
    fn median_of_even_and_odd_lists() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
