//! Wire protocol v1: JSON text frames `{"v":1,"type":...,...}`.

use glovelink::geometry::{Pose, UnitQuat, Vec3};
use glovelink::handmodel::{GestureLabel, LANDMARK_COUNT, VALUES_PER_LANDMARK};
use glovelink::teleop::{ClutchState, HandInput, TeleopEvent};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u64 = 1;

pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const BAD_VERSION: &str = "bad_version";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const INVALID_PAYLOAD: &str = "invalid_payload";
    pub const OPERATOR_TAKEN: &str = "operator_taken";
    pub const NOT_OPERATOR: &str = "not_operator";
    pub const INVALID_CONFIG: &str = "invalid_config";
    pub const NOT_CLIENT_MESSAGE: &str = "not_client_message";
    pub const BAD_INPUT: &str = "bad_input";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        role: Role,
    },
    HandInput {
        t: f64,
        pos: [f64; 3],
        /// `[w, x, y, z]`.
        quat: [f64; 4],
        finger_dist: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        landmarks: Option<Vec<[f64; VALUES_PER_LANDMARK]>>,
    },
    /// `null` hands control back to the classifier.
    GestureOverride {
        gesture: Option<GestureLabel>,
    },
    RobotState {
        t: f64,
        pos: [f64; 3],
        quat: [f64; 4],
        jaw: f64,
        clutch: ClutchState,
        tracking: bool,
        haptic: bool,
        energy: bool,
        at_goal: bool,
        gesture: GestureLabel,
    },
    Event {
        name: TeleopEvent,
        t: f64,
    },
    SetConfig {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_h: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_t: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        latency: Option<f64>,
    },
    Ack {
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<Role>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<Value>,
    },
    Error {
        code: String,
        message: String,
    },
}

const TYPES: [&str; 8] = ["hello", "hand_input", "gesture_override", "robot_state", "event", "set_config", "ack", "error"];

#[derive(Debug, Clone, PartialEq)]
pub struct WireError {
    pub code: &'static str,
    pub message: String,
}

impl WireError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn to_message(&self) -> Message {
        Message::Error { code: self.code.to_string(), message: self.message.clone() }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    v: u64,
    #[serde(flatten)]
    msg: &'a Message,
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Hello { .. } => "hello",
            Self::HandInput { .. } => "hand_input",
            Self::GestureOverride { .. } => "gesture_override",
            Self::RobotState { .. } => "robot_state",
            Self::Event { .. } => "event",
            Self::SetConfig { .. } => "set_config",
            Self::Ack { .. } => "ack",
            Self::Error { .. } => "error",
        }
    }

    /// Compact JSON with `v` first and `type` second.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, msg: self }).expect("messages are serializable")
    }

    pub fn parse(text: &str) -> Result<Self, WireError> {
        let mut obj = match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(WireError::new(codes::MALFORMED, "frame is not a JSON object")),
            Err(e) => return Err(WireError::new(codes::MALFORMED, e.to_string())),
        };
        match obj.remove("v") {
            Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION) => {}
            Some(other) => return Err(WireError::new(codes::BAD_VERSION, format!("unsupported version {other}"))),
            None => return Err(WireError::new(codes::BAD_VERSION, "missing \"v\"")),
        }
        match obj.get("type").and_then(Value::as_str) {
            Some(t) if TYPES.contains(&t) => {}
            Some(t) => return Err(WireError::new(codes::UNKNOWN_TYPE, format!("unknown type {t:?}"))),
            None => return Err(WireError::new(codes::MALFORMED, "missing \"type\"")),
        }
        serde_json::from_value(Value::Object(obj)).map_err(|e| WireError::new(codes::INVALID_PAYLOAD, e.to_string()))
    }
}

/// Validated hand sample decoded from a `hand_input` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedHand {
    pub t: f64,
    pub input: HandInput<f64>,
    pub landmarks: Option<Vec<[f64; VALUES_PER_LANDMARK]>>,
}

pub fn decode_hand(
    t: f64,
    pos: [f64; 3],
    quat: [f64; 4],
    finger_dist: f64,
    landmarks: Option<Vec<[f64; VALUES_PER_LANDMARK]>>,
) -> Result<DecodedHand, WireError> {
    let bad = |m: &str| WireError::new(codes::INVALID_PAYLOAD, m);
    if !t.is_finite() || !pos.iter().all(|v| v.is_finite()) {
        return Err(bad("non-finite time or position"));
    }
    if !(finger_dist.is_finite() && finger_dist >= 0.0) {
        return Err(bad("finger_dist must be finite and non-negative"));
    }
    let q = UnitQuat::from_array(quat).map_err(|_| bad("quat must be a non-zero finite [w,x,y,z]"))?;
    if let Some(l) = &landmarks {
        if l.len() != LANDMARK_COUNT || !l.iter().flatten().all(|v| v.is_finite()) {
            return Err(bad("landmarks must be 21 finite rows of 7 values"));
        }
    }
    Ok(DecodedHand {
        t,
        input: HandInput { pose: Pose::new(Vec3::from_array(pos), q), finger_distance: finger_dist },
        landmarks,
    })
}
