//! Wire protocol and node runtimes for the perception-client, relay, and
//! prediction-server roles.
//!
//! Frames are a 4-byte big-endian body length followed by a UTF-8 JSON body
//! with the fields `type`, `seq`, `ts_us`, `payload`. Timestamps come from
//! the host monotonic clock (µs), which is shared across processes on one
//! machine, so one-way latencies between co-hosted nodes are directly
//! measurable.

mod link;
mod node;

pub use link::{
    measure_rtt, median, FrameReader, FrameWriter, LinkShim, LinkStats, RttConfig,
};
pub use node::{
    connect_with_backoff, relay_process, run_node, NodeConfig, NodeHandle, NodeRole,
    PredictionClient, PredictorSource, Topology,
};

use crate::semantics::NumericFeatures;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame body cap: 1 MiB.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

/// Fixed schema version of the LINGUISTIC payload. The relay maps whatever
/// FEATURES schema arrives onto this one, which is what keeps the
/// prediction side insulated from perception-side changes.
pub const LINGUISTIC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("declared frame length {0} exceeds the 1 MiB cap")]
    FrameTooLarge(usize),
    #[error("decode: {0}")]
    Decode(String),
    #[error("unsupported features schema version {0}")]
    Schema(u32),
    #[error("io: {0}")]
    Io(String),
    #[error("timed out")]
    Timeout,
    #[error("link unusable: {drops}/{total} probes dropped")]
    LinkUnusable { drops: usize, total: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

impl From<std::io::Error> for CommError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => CommError::Timeout,
            _ => CommError::Io(e.to_string()),
        }
    }
}

/// Monotonic clock in microseconds (CLOCK_MONOTONIC). Comparable across
/// processes on the same host.
pub fn mono_us() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: clock_gettime writes the timespec it is handed.
    unsafe {
        libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts);
    }
    ts.tv_sec as u64 * 1_000_000 + ts.tv_nsec as u64 / 1_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageType {
    Hello,
    Features,
    Linguistic,
    Prediction,
    Echo,
    EchoReply,
}

impl MessageType {
    pub fn wire_name(self) -> &'static str {
        match self {
            MessageType::Hello => "HELLO",
            MessageType::Features => "FEATURES",
            MessageType::Linguistic => "LINGUISTIC",
            MessageType::Prediction => "PREDICTION",
            MessageType::Echo => "ECHO",
            MessageType::EchoReply => "ECHO_REPLY",
        }
    }

    fn from_wire(name: &str) -> Option<Self> {
        Some(match name {
            "HELLO" => MessageType::Hello,
            "FEATURES" => MessageType::Features,
            "LINGUISTIC" => MessageType::Linguistic,
            "PREDICTION" => MessageType::Prediction,
            "ECHO" => MessageType::Echo,
            "ECHO_REPLY" => MessageType::EchoReply,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub node: String,
    pub role: String,
}

/// Numeric feature bundle from the perception side. The body encoding is
/// versioned: v1 carries the flat numeric vector, v2 nests it under
/// `numeric` with a units tag. The relay understands both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesPayload {
    pub schema_version: u32,
    /// Sender clock at send time (µs, host-monotonic).
    pub sent_ts_us: u64,
    pub body: serde_json::Value,
}

impl FeaturesPayload {
    pub fn v1(features: &NumericFeatures, sent_ts_us: u64) -> Self {
        FeaturesPayload {
            schema_version: 1,
            sent_ts_us,
            body: serde_json::to_value(features).expect("features serialize"),
        }
    }

    pub fn v2(features: &NumericFeatures, sent_ts_us: u64) -> Self {
        FeaturesPayload {
            schema_version: 2,
            sent_ts_us,
            body: serde_json::json!({
                "units": "si",
                "numeric": serde_json::to_value(features).expect("features serialize"),
            }),
        }
    }

    /// Normalizes any supported schema version back to the numeric vector.
    pub fn numeric(&self) -> Result<NumericFeatures, CommError> {
        let value = match self.schema_version {
            1 => self.body.clone(),
            2 => self
                .body
                .get("numeric")
                .cloned()
                .ok_or_else(|| CommError::Decode("v2 body missing `numeric`".into()))?,
            v => return Err(CommError::Schema(v)),
        };
        serde_json::from_value(value).map_err(|e| CommError::Decode(e.to_string()))
    }
}

/// The relay's output: the fixed linguistic schema plus the latency
/// bookkeeping stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticPayload {
    pub schema_version: u32,
    /// Category labels in ontology order.
    pub labels: Vec<String>,
    pub origin_seq: u64,
    pub origin_ts_us: u64,
    pub relay_ingress_ts_us: u64,
    pub relay_egress_ts_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPayload {
    pub maneuver: String,
    /// P(laneKeep), P(leftLaneChange), P(rightLaneChange).
    pub posterior: [f64; 3],
    pub origin_seq: u64,
    pub origin_ts_us: u64,
    pub server_ts_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoPayload {
    pub nonce: u64,
}

/// Typed message body; the variant is the wire `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Hello(HelloPayload),
    Features(FeaturesPayload),
    Linguistic(LinguisticPayload),
    Prediction(PredictionPayload),
    Echo(EchoPayload),
    EchoReply(EchoPayload),
}

impl Payload {
    pub fn message_type(&self) -> MessageType {
        match self {
            Payload::Hello(_) => MessageType::Hello,
            Payload::Features(_) => MessageType::Features,
            Payload::Linguistic(_) => MessageType::Linguistic,
            Payload::Prediction(_) => MessageType::Prediction,
            Payload::Echo(_) => MessageType::Echo,
            Payload::EchoReply(_) => MessageType::EchoReply,
        }
    }

    fn to_value(&self) -> serde_json::Value {
        match self {
            Payload::Hello(p) => serde_json::to_value(p),
            Payload::Features(p) => serde_json::to_value(p),
            Payload::Linguistic(p) => serde_json::to_value(p),
            Payload::Prediction(p) => serde_json::to_value(p),
            Payload::Echo(p) => serde_json::to_value(p),
            Payload::EchoReply(p) => serde_json::to_value(p),
        }
        .expect("payloads serialize")
    }

    fn from_value(t: MessageType, value: serde_json::Value) -> Result<Self, CommError> {
        let decode = |e: serde_json::Error| CommError::Decode(e.to_string());
        Ok(match t {
            MessageType::Hello => Payload::Hello(serde_json::from_value(value).map_err(decode)?),
            MessageType::Features => {
                Payload::Features(serde_json::from_value(value).map_err(decode)?)
            }
            MessageType::Linguistic => {
                Payload::Linguistic(serde_json::from_value(value).map_err(decode)?)
            }
            MessageType::Prediction => {
                Payload::Prediction(serde_json::from_value(value).map_err(decode)?)
            }
            MessageType::Echo => Payload::Echo(serde_json::from_value(value).map_err(decode)?),
            MessageType::EchoReply => {
                Payload::EchoReply(serde_json::from_value(value).map_err(decode)?)
            }
        })
    }
}

/// One framed wire unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub ts_us: u64,
    pub payload: Payload,
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        self.payload.message_type()
    }
}

#[derive(Serialize, Deserialize)]
struct WireBody {
    #[serde(rename = "type")]
    msg_type: String,
    seq: u64,
    ts_us: u64,
    payload: serde_json::Value,
}

/// Serializes the JSON body (without the length prefix).
pub fn encode_body(msg: &Message) -> Vec<u8> {
    let body = WireBody {
        msg_type: msg.message_type().wire_name().to_string(),
        seq: msg.seq,
        ts_us: msg.ts_us,
        payload: msg.payload.to_value(),
    };
    serde_json::to_vec(&body).expect("message serializes")
}

/// Parses a JSON body, enforcing the type↔payload correspondence.
pub fn decode_body(bytes: &[u8]) -> Result<Message, CommError> {
    let body: WireBody =
        serde_json::from_slice(bytes).map_err(|e| CommError::Decode(e.to_string()))?;
    let t = MessageType::from_wire(&body.msg_type)
        .ok_or_else(|| CommError::Decode(format!("unknown message type `{}`", body.msg_type)))?;
    Ok(Message {
        seq: body.seq,
        ts_us: body.ts_us,
        payload: Payload::from_value(t, body.payload)?,
    })
}

/// Full frame: 4-byte big-endian body length, then the JSON body.
pub fn frame_encode(msg: &Message) -> Result<Vec<u8>, CommError> {
    let body = encode_body(msg);
    if body.len() > MAX_FRAME_BYTES {
        return Err(CommError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes one complete frame from a byte slice. The length is validated
/// before the body is touched.
pub fn frame_decode(bytes: &[u8]) -> Result<Message, CommError> {
    if bytes.len() < 4 {
        return Err(CommError::Decode("frame shorter than the length prefix".into()));
    }
    let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if declared > MAX_FRAME_BYTES {
        return Err(CommError::FrameTooLarge(declared));
    }
    let body = &bytes[4..];
    if body.len() != declared {
        return Err(CommError::Decode(format!(
            "frame body is {} bytes, header declared {declared}",
            body.len()
        )));
    }
    decode_body(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hello() -> Message {
        Message {
            seq: 1,
            ts_us: 42,
            payload: Payload::Hello(HelloPayload {
                node: "tv".into(),
                role: "perception_client".into(),
            }),
        }
    }

    #[test]
    fn hello_round_trips_bit_exactly() {
        let msg = hello();
        let bytes = frame_encode(&msg).unwrap();
        let back = frame_decode(&bytes).unwrap();
        assert_eq!(back, msg);
        // Re-encoding is byte-stable.
        assert_eq!(frame_encode(&back).unwrap(), bytes);
    }

    #[test]
    fn oversized_declared_length_fails_before_body_read() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(2u32 << 20).to_be_bytes());
        bytes.extend_from_slice(b"ignored");
        assert!(matches!(
            frame_decode(&bytes),
            Err(CommError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn type_payload_mismatch_is_a_decode_error() {
        // An ECHO frame whose payload is a HELLO body.
        let body = serde_json::json!({
            "type": "ECHO",
            "seq": 1,
            "ts_us": 2,
            "payload": {"node": "x", "role": "y"},
        });
        let body = serde_json::to_vec(&body).unwrap();
        let mut bytes = (body.len() as u32).to_be_bytes().to_vec();
        bytes.extend_from_slice(&body);
        assert!(matches!(frame_decode(&bytes), Err(CommError::Decode(_))));
    }

    #[test]
    fn features_schema_v1_and_v2_normalize_identically() {
        let numeric = crate::semantics::NumericFeatures {
            lat_vel: 0.1,
            lat_acc: 0.0,
            ttc_preceding: 1.5,
            ttc_left_preceding: f64::INFINITY,
            ttc_right_preceding: f64::INFINITY,
            ttc_left_following: 9.0,
            ttc_right_following: 9.0,
            lane_id: 0,
            lane_count: 2,
            lane_pos_offset: 0.0,
            lane_width: 3.5,
            thw_preceding: 2.5,
            frontal_gap: crate::semantics::LaneTriple {
                left: 20.0,
                current: 8.0,
                right: f64::NEG_INFINITY,
            },
            lane_mean_speed: crate::semantics::LaneTriple {
                left: 1.5,
                current: 2.5,
                right: 0.0,
            },
        };
        let v1 = FeaturesPayload::v1(&numeric, 10);
        let v2 = FeaturesPayload::v2(&numeric, 10);
        assert_eq!(v1.numeric().unwrap(), numeric);
        assert_eq!(v2.numeric().unwrap(), numeric);
        assert!(matches!(
            FeaturesPayload {
                schema_version: 99,
                sent_ts_us: 0,
                body: serde_json::Value::Null
            }
            .numeric(),
            Err(CommError::Schema(99))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        /// Arbitrary bytes either decode to a valid message or fail with an
        /// error; the decoder must never panic.
        #[test]
        fn fuzzed_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = frame_decode(&bytes);
        }

        /// Same, but with a well-formed length prefix and garbage body.
        #[test]
        fn framed_garbage_never_panics(body in proptest::collection::vec(any::<u8>(), 0..256)) {
            let mut bytes = (body.len() as u32).to_be_bytes().to_vec();
            bytes.extend_from_slice(&body);
            let _ = frame_decode(&bytes);
        }
    }
}
