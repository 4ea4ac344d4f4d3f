//! Ontology, numeric→linguistic categorization, triple reification, and
//! canonical frame keys — the data transformation the relay performs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SemanticsError {
    #[error("numeric feature `{0}` is NaN")]
    NanInput(&'static str),
    #[error("category `{category}` not defined for feature `{feature}`")]
    UnknownCategory { feature: String, category: String },
    #[error("frame has {got} values, ontology defines {want} features")]
    ArityMismatch { got: usize, want: usize },
    #[error("invalid ontology: {0}")]
    BadOntology(String),
    #[error("unknown maneuver label `{0}`")]
    UnknownManeuver(String),
    #[error("fact file format: {0}")]
    FactFormat(String),
    #[error("io: {0}")]
    Io(String),
}

/// The three maneuver hypotheses. The declaration order is the canonical
/// tie-break order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Maneuver {
    LaneKeep,
    LeftLaneChange,
    RightLaneChange,
}

pub const MANEUVERS: [Maneuver; 3] = [
    Maneuver::LaneKeep,
    Maneuver::LeftLaneChange,
    Maneuver::RightLaneChange,
];

impl Maneuver {
    pub fn label(self) -> &'static str {
        match self {
            Maneuver::LaneKeep => "laneKeep",
            Maneuver::LeftLaneChange => "leftLaneChange",
            Maneuver::RightLaneChange => "rightLaneChange",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Maneuver::LaneKeep => 0,
            Maneuver::LeftLaneChange => 1,
            Maneuver::RightLaneChange => 2,
        }
    }

    pub fn from_label(label: &str) -> Result<Self, SemanticsError> {
        MANEUVERS
            .iter()
            .copied()
            .find(|m| m.label() == label)
            .ok_or_else(|| SemanticsError::UnknownManeuver(label.to_string()))
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One linguistic feature: its relation label and the ordered category list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub relation: String,
    pub categories: Vec<String>,
}

impl FeatureDef {
    fn new(name: &str, relation: &str, categories: &[&str]) -> Self {
        FeatureDef {
            name: name.into(),
            relation: relation.into(),
            categories: categories.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn category_index(&self, label: &str) -> Option<u8> {
        self.categories.iter().position(|c| c == label).map(|i| i as u8)
    }
}

/// Positions of the twelve features within any ontology built here.
pub const F_LAT_VEL: usize = 0;
pub const F_LAT_ACC: usize = 1;
pub const F_TTC_PRECEDING: usize = 2;
pub const F_TTC_LEFT_PRECEDING: usize = 3;
pub const F_TTC_RIGHT_PRECEDING: usize = 4;
pub const F_TTC_LEFT_FOLLOWING: usize = 5;
pub const F_TTC_RIGHT_FOLLOWING: usize = 6;
pub const F_LANE_ID: usize = 7;
pub const F_LANE_POS: usize = 8;
pub const F_THW_PRECEDING: usize = 9;
pub const F_GAP_LANE: usize = 10;
pub const F_ATTRACTION_LANE: usize = 11;

pub const FEATURE_COUNT: usize = 12;

const RISK: [&str; 3] = ["highRisk", "mediumRisk", "lowRisk"];
const LANE_CHOICE: [&str; 3] = ["leftLane", "currentLane", "rightLane"];

/// The twelve-feature ontology plus the intention vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub name: String,
    pub subject: String,
    pub intention_relation: String,
    pub features: Vec<FeatureDef>,
}

impl Ontology {
    /// Three-lane road ontology (lane identifier has three categories).
    pub fn three_lane() -> Self {
        Self::with_lanes("three-lane", &["rightLane", "centerLane", "leftLane"])
    }

    /// Two-lane road ontology, the reduced table of the scalability study.
    pub fn two_lane() -> Self {
        Self::with_lanes("two-lane", &["rightLane", "leftLane"])
    }

    fn with_lanes(name: &str, lanes: &[&str]) -> Self {
        let features = vec![
            FeatureDef::new(
                "lateral_velocity",
                "LATERAL_VELOCITY_IS",
                &["movingLeft", "movingStraight", "movingRight"],
            ),
            FeatureDef::new(
                "lateral_acceleration",
                "LATERAL_ACCELERATION_IS",
                &["acceleratingLeft", "steady", "acceleratingRight"],
            ),
            FeatureDef::new("ttc_preceding", "TTC_WITH_PRECEDING_VEHICLE_IS", &RISK),
            FeatureDef::new(
                "ttc_left_preceding",
                "TTC_WITH_LEFT_PRECEDING_VEHICLE_IS",
                &RISK,
            ),
            FeatureDef::new(
                "ttc_right_preceding",
                "TTC_WITH_RIGHT_PRECEDING_VEHICLE_IS",
                &RISK,
            ),
            FeatureDef::new(
                "ttc_left_following",
                "TTC_WITH_LEFT_FOLLOWING_VEHICLE_IS",
                &RISK,
            ),
            FeatureDef::new(
                "ttc_right_following",
                "TTC_WITH_RIGHT_FOLLOWING_VEHICLE_IS",
                &RISK,
            ),
            FeatureDef::new("lane_id", "LANE_ID_IS", lanes),
            FeatureDef::new(
                "lane_position",
                "LANE_POSITION_IS",
                &["leftOfCenter", "centered", "rightOfCenter"],
            ),
            FeatureDef::new("thw_preceding", "THW_WITH_PRECEDING_VEHICLE_IS", &RISK),
            FeatureDef::new("highest_frontal_gap", "HIGHEST_FRONTAL_GAP_IS", &LANE_CHOICE),
            FeatureDef::new(
                "highest_attraction",
                "HIGHEST_ATTRACTION_IS",
                &LANE_CHOICE,
            ),
        ];
        Ontology {
            name: name.into(),
            subject: "vehicle".into(),
            intention_relation: "INTENTION_IS".into(),
            features,
        }
    }

    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.features.len() != FEATURE_COUNT {
            return Err(SemanticsError::BadOntology(format!(
                "expected {FEATURE_COUNT} features, got {}",
                self.features.len()
            )));
        }
        let mut relations = std::collections::HashSet::new();
        for f in &self.features {
            if f.categories.len() < 2 {
                return Err(SemanticsError::BadOntology(format!(
                    "feature `{}` needs at least 2 categories",
                    f.name
                )));
            }
            if !relations.insert(&f.relation) || f.relation == self.intention_relation {
                return Err(SemanticsError::BadOntology(format!(
                    "relation label `{}` is not unique",
                    f.relation
                )));
            }
            for c in &f.categories {
                if c.contains('|') || c.contains(',') {
                    return Err(SemanticsError::BadOntology(format!(
                        "category `{c}` contains a reserved separator"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Raw combination count before feasibility filtering.
    pub fn raw_combination_count(&self) -> u64 {
        self.features
            .iter()
            .map(|f| f.categories.len() as u64)
            .product()
    }

    /// Stable content fingerprint (FNV-1a over the canonical serialization);
    /// lookup tables embed it so stale tables are rejected at load.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("ontology serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }

    /// Canonical lookup key: ontology-ordered category labels joined with `|`.
    pub fn frame_key(&self, frame: &LinguisticFrame) -> String {
        frame
            .values
            .iter()
            .zip(&self.features)
            .map(|(&v, f)| f.categories[v as usize].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Inverse of [`Ontology::frame_key`].
    pub fn parse_key(&self, key: &str) -> Result<LinguisticFrame, SemanticsError> {
        let labels: Vec<&str> = key.split('|').collect();
        if labels.len() != self.features.len() {
            return Err(SemanticsError::ArityMismatch {
                got: labels.len(),
                want: self.features.len(),
            });
        }
        let values = labels
            .iter()
            .zip(&self.features)
            .map(|(label, f)| {
                f.category_index(label).ok_or_else(|| SemanticsError::UnknownCategory {
                    feature: f.name.clone(),
                    category: label.to_string(),
                })
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(LinguisticFrame { values })
    }

    /// Builds a frame from per-feature labels in ontology order.
    pub fn frame_from_labels(&self, labels: &[&str]) -> Result<LinguisticFrame, SemanticsError> {
        if labels.len() != self.features.len() {
            return Err(SemanticsError::ArityMismatch {
                got: labels.len(),
                want: self.features.len(),
            });
        }
        let values = labels
            .iter()
            .zip(&self.features)
            .map(|(label, f)| {
                f.category_index(label).ok_or_else(|| SemanticsError::UnknownCategory {
                    feature: f.name.clone(),
                    category: label.to_string(),
                })
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(LinguisticFrame { values })
    }

    pub fn check_frame(&self, frame: &LinguisticFrame) -> Result<(), SemanticsError> {
        if frame.values.len() != self.features.len() {
            return Err(SemanticsError::ArityMismatch {
                got: frame.values.len(),
                want: self.features.len(),
            });
        }
        for (&v, f) in frame.values.iter().zip(&self.features) {
            if v as usize >= f.categories.len() {
                return Err(SemanticsError::UnknownCategory {
                    feature: f.name.clone(),
                    category: format!("#{v}"),
                });
            }
        }
        Ok(())
    }

    /// Index of the category label within a feature, as an error-checked pair.
    pub fn category_of(&self, feature: usize, label: &str) -> Result<u8, SemanticsError> {
        self.features[feature].category_index(label).ok_or_else(|| {
            SemanticsError::UnknownCategory {
                feature: self.features[feature].name.clone(),
                category: label.to_string(),
            }
        })
    }
}

/// One category value per ontology feature, stored as indices into each
/// feature's category list, in ontology order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinguisticFrame {
    pub values: Vec<u8>,
}

impl LinguisticFrame {
    pub fn labels<'a>(&self, ontology: &'a Ontology) -> Vec<&'a str> {
        self.values
            .iter()
            .zip(&ontology.features)
            .map(|(&v, f)| f.categories[v as usize].as_str())
            .collect()
    }

    pub fn get(&self, feature: usize) -> u8 {
        self.values[feature]
    }
}

/// ⟨subject, relation, object⟩ fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

/// Categorization boundaries. TTC/THW boundaries follow the usual
/// literature splits; the lateral-motion boundaries are the corpus
/// mean ± std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub lat_vel_mean: f64,
    pub lat_vel_std: f64,
    pub lat_acc_mean: f64,
    pub lat_acc_std: f64,
    /// TTC below this is highRisk (s).
    pub ttc_high_s: f64,
    /// TTC below this (and above `ttc_high_s`) is mediumRisk (s).
    pub ttc_medium_s: f64,
    pub thw_high_s: f64,
    pub thw_medium_s: f64,
    /// In-lane position boundary as a fraction of lane width.
    pub lane_pos_frac: f64,
    /// Weight of lane mean speed in the attraction score.
    pub attraction_speed_weight: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            lat_vel_mean: 0.0,
            lat_vel_std: 0.2,
            lat_acc_mean: 0.0,
            lat_acc_std: 0.3,
            ttc_high_s: 2.0,
            ttc_medium_s: 4.0,
            thw_high_s: 1.0,
            thw_medium_s: 2.0,
            lane_pos_frac: 0.25,
            attraction_speed_weight: 1.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        if !(self.ttc_high_s < self.ttc_medium_s) {
            return Err(SemanticsError::BadOntology(
                "ttc_high_s must be below ttc_medium_s".into(),
            ));
        }
        if self.lat_vel_std <= 0.0 || self.lat_acc_std <= 0.0 {
            return Err(SemanticsError::BadOntology(
                "lateral std thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// JSON-safe encoding for values that may be ±∞: JSON has no infinity
/// literal, so non-finite values travel as the strings "inf"/"-inf"/"nan".
pub mod wire_f64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct F64Visitor;

    impl Visitor<'_> for F64Visitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("unexpected float string `{other}`"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(F64Visitor)
    }
}

/// Per-lane values around the subject vehicle. Absent lanes carry
/// `NEG_INFINITY` gaps so they can never win an argmax; absent vehicles
/// carry `INFINITY` TTC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneTriple {
    #[serde(with = "wire_f64")]
    pub left: f64,
    #[serde(with = "wire_f64")]
    pub current: f64,
    #[serde(with = "wire_f64")]
    pub right: f64,
}

/// The raw numeric vector the TV's perception produces each frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeatures {
    /// Lateral velocity (m/s), +y = left.
    pub lat_vel: f64,
    pub lat_acc: f64,
    #[serde(with = "wire_f64")]
    pub ttc_preceding: f64,
    #[serde(with = "wire_f64")]
    pub ttc_left_preceding: f64,
    #[serde(with = "wire_f64")]
    pub ttc_right_preceding: f64,
    #[serde(with = "wire_f64")]
    pub ttc_left_following: f64,
    #[serde(with = "wire_f64")]
    pub ttc_right_following: f64,
    pub lane_id: u32,
    pub lane_count: u32,
    /// Offset from the lane center (m), +y = left.
    pub lane_pos_offset: f64,
    pub lane_width: f64,
    #[serde(with = "wire_f64")]
    pub thw_preceding: f64,
    pub frontal_gap: LaneTriple,
    pub lane_mean_speed: LaneTriple,
}

fn risk_label(value: f64, high: f64, medium: f64) -> &'static str {
    if value < high {
        "highRisk"
    } else if value < medium {
        "mediumRisk"
    } else {
        "lowRisk"
    }
}

fn band_label(value: f64, mean: f64, std: f64, up: &'static str, mid: &'static str, down: &'static str) -> &'static str {
    if value >= mean + std {
        up
    } else if value <= mean - std {
        down
    } else {
        mid
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<(), SemanticsError> {
    if v.is_nan() {
        Err(SemanticsError::NanInput(name))
    } else {
        Ok(())
    }
}

/// Argmax over {left, current, right} with a deterministic preference order
/// current → left → right on exact ties.
fn lane_argmax(t: &LaneTriple) -> &'static str {
    let mut best = ("currentLane", t.current);
    if t.left > best.1 {
        best = ("leftLane", t.left);
    }
    if t.right > best.1 {
        best = ("rightLane", t.right);
    }
    best.0
}

/// Converts the numeric vector into the twelve linguistic categories. Total
/// on finite-or-infinite inputs; NaN anywhere is rejected.
pub fn categorize(
    numeric: &NumericFeatures,
    th: &Thresholds,
    ontology: &Ontology,
) -> Result<LinguisticFrame, SemanticsError> {
    check_finite("lat_vel", numeric.lat_vel)?;
    check_finite("lat_acc", numeric.lat_acc)?;
    check_finite("ttc_preceding", numeric.ttc_preceding)?;
    check_finite("ttc_left_preceding", numeric.ttc_left_preceding)?;
    check_finite("ttc_right_preceding", numeric.ttc_right_preceding)?;
    check_finite("ttc_left_following", numeric.ttc_left_following)?;
    check_finite("ttc_right_following", numeric.ttc_right_following)?;
    check_finite("lane_pos_offset", numeric.lane_pos_offset)?;
    check_finite("thw_preceding", numeric.thw_preceding)?;
    for v in [
        ("frontal_gap.left", numeric.frontal_gap.left),
        ("frontal_gap.current", numeric.frontal_gap.current),
        ("frontal_gap.right", numeric.frontal_gap.right),
        ("lane_mean_speed.left", numeric.lane_mean_speed.left),
        ("lane_mean_speed.current", numeric.lane_mean_speed.current),
        ("lane_mean_speed.right", numeric.lane_mean_speed.right),
    ] {
        check_finite(v.0, v.1)?;
    }

    let lane_label = if numeric.lane_id == 0 {
        "rightLane"
    } else if numeric.lane_id + 1 >= numeric.lane_count {
        "leftLane"
    } else {
        "centerLane"
    };
    let pos_bound = th.lane_pos_frac * numeric.lane_width;
    let pos_label = if numeric.lane_pos_offset >= pos_bound {
        "leftOfCenter"
    } else if numeric.lane_pos_offset <= -pos_bound {
        "rightOfCenter"
    } else {
        "centered"
    };
    let w = th.attraction_speed_weight;
    let attraction = LaneTriple {
        left: numeric.frontal_gap.left + w * numeric.lane_mean_speed.left,
        current: numeric.frontal_gap.current + w * numeric.lane_mean_speed.current,
        right: numeric.frontal_gap.right + w * numeric.lane_mean_speed.right,
    };

    let labels = [
        band_label(
            numeric.lat_vel,
            th.lat_vel_mean,
            th.lat_vel_std,
            "movingLeft",
            "movingStraight",
            "movingRight",
        ),
        band_label(
            numeric.lat_acc,
            th.lat_acc_mean,
            th.lat_acc_std,
            "acceleratingLeft",
            "steady",
            "acceleratingRight",
        ),
        risk_label(numeric.ttc_preceding, th.ttc_high_s, th.ttc_medium_s),
        risk_label(numeric.ttc_left_preceding, th.ttc_high_s, th.ttc_medium_s),
        risk_label(numeric.ttc_right_preceding, th.ttc_high_s, th.ttc_medium_s),
        risk_label(numeric.ttc_left_following, th.ttc_high_s, th.ttc_medium_s),
        risk_label(numeric.ttc_right_following, th.ttc_high_s, th.ttc_medium_s),
        lane_label,
        pos_label,
        risk_label(numeric.thw_preceding, th.thw_high_s, th.thw_medium_s),
        lane_argmax(&numeric.frontal_gap),
        lane_argmax(&attraction),
    ];
    ontology.frame_from_labels(&labels)
}

/// Reifies a frame into one triple per feature, plus the intention triple
/// when a maneuver label is attached.
pub fn reify(
    frame: &LinguisticFrame,
    ontology: &Ontology,
    intention: Option<Maneuver>,
) -> Vec<Triple> {
    let mut triples: Vec<Triple> = frame
        .values
        .iter()
        .zip(&ontology.features)
        .map(|(&v, f)| {
            Triple::new(
                ontology.subject.clone(),
                f.relation.clone(),
                f.categories[v as usize].clone(),
            )
        })
        .collect();
    if let Some(m) = intention {
        triples.push(Triple::new(
            ontology.subject.clone(),
            ontology.intention_relation.clone(),
            m.label(),
        ));
    }
    triples
}

/// Like [`reify`] but with an explicit subject, used when building the
/// embedding corpus with hypothesis-conditioned subjects.
pub fn reify_with_subject(
    frame: &LinguisticFrame,
    ontology: &Ontology,
    subject: &str,
    intention: Option<Maneuver>,
) -> Vec<Triple> {
    let mut triples = reify(frame, ontology, intention);
    for t in &mut triples {
        t.subject = subject.to_string();
    }
    triples
}

/// Writes triples in the three-column fact CSV format.
pub fn write_fact_csv<W: Write>(writer: W, triples: &[Triple]) -> Result<(), SemanticsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject", "relation", "object"])
        .map_err(|e| SemanticsError::Io(e.to_string()))?;
    for t in triples {
        w.write_record([&t.subject, &t.relation, &t.object])
            .map_err(|e| SemanticsError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SemanticsError::Io(e.to_string()))?;
    Ok(())
}

/// Reads triples back from the fact CSV format.
pub fn read_fact_csv<R: Read>(reader: R) -> Result<Vec<Triple>, SemanticsError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| SemanticsError::FactFormat(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["subject", "relation", "object"] {
        return Err(SemanticsError::FactFormat(format!(
            "unexpected header {headers:?}"
        )));
    }
    let mut triples = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| SemanticsError::FactFormat(e.to_string()))?;
        if record.len() != 3 {
            return Err(SemanticsError::FactFormat(format!(
                "row has {} fields",
                record.len()
            )));
        }
        triples.push(Triple::new(&record[0], &record[1], &record[2]));
    }
    Ok(triples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neutral_numeric() -> NumericFeatures {
        NumericFeatures {
            lat_vel: 0.0,
            lat_acc: 0.0,
            ttc_preceding: f64::INFINITY,
            ttc_left_preceding: f64::INFINITY,
            ttc_right_preceding: f64::INFINITY,
            ttc_left_following: f64::INFINITY,
            ttc_right_following: f64::INFINITY,
            lane_id: 1,
            lane_count: 3,
            lane_pos_offset: 0.0,
            lane_width: 3.5,
            thw_preceding: f64::INFINITY,
            frontal_gap: LaneTriple {
                left: 20.0,
                current: 30.0,
                right: 20.0,
            },
            lane_mean_speed: LaneTriple {
                left: 2.0,
                current: 2.0,
                right: 2.0,
            },
        }
    }

    #[test]
    fn mean_lateral_velocity_is_straight() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let frame = categorize(&neutral_numeric(), &th, &ont).unwrap();
        assert_eq!(frame.labels(&ont)[F_LAT_VEL], "movingStraight");
    }

    #[test]
    fn ttc_one_second_is_high_risk() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.ttc_preceding = 1.0;
        let frame = categorize(&n, &th, &ont).unwrap();
        assert_eq!(frame.labels(&ont)[F_TTC_PRECEDING], "highRisk");
    }

    #[test]
    fn infinite_ttc_is_low_risk() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let frame = categorize(&neutral_numeric(), &th, &ont).unwrap();
        assert_eq!(frame.labels(&ont)[F_TTC_PRECEDING], "lowRisk");
    }

    #[test]
    fn nan_input_is_rejected() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.lat_vel = f64::NAN;
        assert_eq!(
            categorize(&n, &th, &ont),
            Err(SemanticsError::NanInput("lat_vel"))
        );
    }

    #[test]
    fn lateral_bands_follow_mean_std() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.lat_vel = th.lat_vel_mean + th.lat_vel_std; // boundary inclusive
        let f = categorize(&n, &th, &ont).unwrap();
        assert_eq!(f.labels(&ont)[F_LAT_VEL], "movingLeft");
        n.lat_vel = th.lat_vel_mean - th.lat_vel_std;
        let f = categorize(&n, &th, &ont).unwrap();
        assert_eq!(f.labels(&ont)[F_LAT_VEL], "movingRight");
    }

    #[test]
    fn leftmost_lane_maps_edge_features() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.lane_id = 2; // leftmost of 3
        n.frontal_gap.left = f64::NEG_INFINITY;
        let f = categorize(&n, &th, &ont).unwrap();
        let labels = f.labels(&ont);
        assert_eq!(labels[F_LANE_ID], "leftLane");
        assert_ne!(labels[F_GAP_LANE], "leftLane");
        assert_ne!(labels[F_ATTRACTION_LANE], "leftLane");
    }

    #[test]
    fn reify_produces_one_triple_per_feature() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.lat_vel = 1.0;
        let frame = categorize(&n, &th, &ont).unwrap();
        let triples = reify(&frame, &ont, None);
        assert_eq!(triples.len(), 12);
        assert!(triples.contains(&Triple::new(
            "vehicle",
            "LATERAL_VELOCITY_IS",
            "movingLeft"
        )));
    }

    #[test]
    fn reify_with_intention_appends_the_intention_triple() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let frame = categorize(&neutral_numeric(), &th, &ont).unwrap();
        let triples = reify(&frame, &ont, Some(Maneuver::LeftLaneChange));
        assert_eq!(triples.len(), 13);
        assert!(triples.contains(&Triple::new("vehicle", "INTENTION_IS", "leftLaneChange")));
    }

    #[test]
    fn frame_key_is_deterministic_and_parses_back() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let frame = categorize(&neutral_numeric(), &th, &ont).unwrap();
        let key = ont.frame_key(&frame);
        assert_eq!(key, ont.frame_key(&frame));
        assert_eq!(key.split('|').count(), 12);
        let parsed = ont.parse_key(&key).unwrap();
        assert_eq!(parsed, frame);
    }

    #[test]
    fn keys_differ_when_any_feature_differs() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let base = categorize(&neutral_numeric(), &th, &ont).unwrap();
        let mut other = base.clone();
        other.values[F_ATTRACTION_LANE] =
            (other.values[F_ATTRACTION_LANE] + 1) % ont.features[F_ATTRACTION_LANE].categories.len() as u8;
        assert_ne!(ont.frame_key(&base), ont.frame_key(&other));
    }

    #[test]
    fn fact_csv_round_trips() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let frame = categorize(&neutral_numeric(), &th, &ont).unwrap();
        let triples = reify(&frame, &ont, Some(Maneuver::LaneKeep));
        let mut buf = Vec::new();
        write_fact_csv(&mut buf, &triples).unwrap();
        let back = read_fact_csv(buf.as_slice()).unwrap();
        assert_eq!(back, triples);
    }

    #[test]
    fn ontology_counts() {
        let three = Ontology::three_lane();
        let two = Ontology::two_lane();
        three.validate().unwrap();
        two.validate().unwrap();
        assert_eq!(three.raw_combination_count(), 531_441); // 3^12
        assert_eq!(two.raw_combination_count(), 354_294); // 3^11 · 2
        assert_ne!(three.fingerprint(), two.fingerprint());
    }

    #[test]
    fn categorize_is_piecewise_constant_within_bands() {
        let ont = Ontology::three_lane();
        let th = Thresholds::default();
        let mut n = neutral_numeric();
        n.ttc_preceding = 3.0;
        let base = categorize(&n, &th, &ont).unwrap();
        for eps in [-0.4, -0.1, 0.1, 0.4] {
            let mut p = n.clone();
            p.ttc_preceding = 3.0 + eps; // stays inside [2, 4)
            assert_eq!(categorize(&p, &th, &ont).unwrap(), base);
        }
    }
}
