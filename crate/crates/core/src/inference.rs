//! Bayesian maneuver prediction over linguistic frames: naive-Bayes
//! posteriors from either frequency-fit or embedding-derived likelihoods,
//! feasibility-filtered enumeration of every frame, lookup-table compilation
//! with CSV and binary-snapshot artifacts, and the scan-vs-hash query
//! benchmark.

use crate::corpus;
use crate::kge::{EmbeddingModel, KgeError};
use crate::semantics::{
    LinguisticFrame, Maneuver, Ontology, SemanticsError, Thresholds, MANEUVERS,
};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufReader, Read, Write};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("frame `{0}` is not feasible for this table")]
    InfeasibleFrame(String),
    #[error("corrupt table: {0}")]
    CorruptTable(String),
    #[error("table was built for ontology {found}, expected {expected}")]
    StaleTable { expected: String, found: String },
    #[error("predictor failed on frame `{key}`: {message}")]
    PredictorFailure { key: String, message: String },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("io: {0}")]
    Io(String),
}

impl From<KgeError> for InferenceError {
    fn from(e: KgeError) -> Self {
        match e {
            KgeError::Vocabulary(l) => InferenceError::Vocabulary(l),
            other => InferenceError::Input(other.to_string()),
        }
    }
}

/// Posterior over the three maneuver hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPosterior {
    /// P(laneKeep), P(leftLaneChange), P(rightLaneChange); sums to 1.
    pub probs: [f64; 3],
    pub argmax: Maneuver,
}

impl ManeuverPosterior {
    /// Normalizes nonnegative weights into a posterior. Ties in the argmax
    /// break in the fixed order laneKeep < leftLaneChange < rightLaneChange.
    pub fn from_probs(weights: [f64; 3]) -> Self {
        let total: f64 = weights.iter().sum();
        let probs = if total > 0.0 {
            [weights[0] / total, weights[1] / total, weights[2] / total]
        } else {
            [1.0 / 3.0; 3]
        };
        let mut argmax = Maneuver::LaneKeep;
        let mut best = probs[0];
        for m in MANEUVERS {
            if probs[m.index()] > best {
                best = probs[m.index()];
                argmax = m;
            }
        }
        ManeuverPosterior { probs, argmax }
    }

    pub fn p(&self, m: Maneuver) -> f64 {
        self.probs[m.index()]
    }
}

/// Where a likelihood table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodSource {
    Frequency,
    Embedding,
}

/// Prior plus per-feature conditional tables P(category | feature, H).
/// Every row is smoothed strictly positive and sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub source: LikelihoodSource,
    pub ontology_fingerprint: String,
    pub prior: [f64; 3],
    /// cond[feature][hypothesis][category]
    pub cond: Vec<[Vec<f64>; 3]>,
}

impl LikelihoodModel {
    fn check_frame(&self, frame: &LinguisticFrame) -> Result<(), InferenceError> {
        if frame.values.len() != self.cond.len() {
            return Err(InferenceError::Input(format!(
                "frame has {} features, model has {}",
                frame.values.len(),
                self.cond.len()
            )));
        }
        for (f, &v) in frame.values.iter().enumerate() {
            if v as usize >= self.cond[f][0].len() {
                return Err(InferenceError::Vocabulary(format!(
                    "category #{v} out of range for feature #{f}"
                )));
            }
        }
        Ok(())
    }

    pub fn save_json<W: Write>(&self, writer: W) -> Result<(), InferenceError> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| InferenceError::Io(e.to_string()))
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self, InferenceError> {
        serde_json::from_reader(reader).map_err(|e| InferenceError::Io(e.to_string()))
    }
}

/// Naive-Bayes posterior: P(H|E) ∝ P(H)·∏ P(eᵢ|H), computed as one batch
/// product and normalized once.
pub fn posterior(
    frame: &LinguisticFrame,
    model: &LikelihoodModel,
) -> Result<ManeuverPosterior, InferenceError> {
    model.check_frame(frame)?;
    let mut weights = model.prior;
    for (f, &v) in frame.values.iter().enumerate() {
        for h in 0..3 {
            weights[h] *= model.cond[f][h][v as usize];
        }
    }
    Ok(ManeuverPosterior::from_probs(weights))
}

/// Same inference as [`posterior`] but applied as a chain of single-feature
/// updates with renormalization after each step, mirroring sequential
/// evidence accumulation. Agrees with the batch product to floating-point
/// roundoff regardless of feature order.
pub fn posterior_sequential(
    frame: &LinguisticFrame,
    model: &LikelihoodModel,
    order: &[usize],
) -> Result<ManeuverPosterior, InferenceError> {
    model.check_frame(frame)?;
    if order.len() != frame.values.len() {
        return Err(InferenceError::Input("update order must cover all features".into()));
    }
    let mut current = ManeuverPosterior::from_probs(model.prior);
    for &f in order {
        let v = frame.values[f] as usize;
        let weights = [
            current.probs[0] * model.cond[f][0][v],
            current.probs[1] * model.cond[f][1][v],
            current.probs[2] * model.cond[f][2][v],
        ];
        current = ManeuverPosterior::from_probs(weights);
    }
    Ok(current)
}

/// Laplace-smoothed frequency fit of P(category | feature, H) from a
/// labeled frame corpus; the prior is the label frequency.
pub fn fit_likelihoods_frequency(
    frames: &[(LinguisticFrame, Maneuver)],
    ontology: &Ontology,
    alpha: f64,
) -> Result<LikelihoodModel, InferenceError> {
    if frames.is_empty() {
        return Err(InferenceError::Input("empty corpus".into()));
    }
    let mut label_counts = [0usize; 3];
    for (_, m) in frames {
        label_counts[m.index()] += 1;
    }
    for m in MANEUVERS {
        if label_counts[m.index()] == 0 {
            return Err(InferenceError::Input(format!(
                "corpus is missing maneuver `{m}`"
            )));
        }
    }

    let mut cond = Vec::with_capacity(ontology.features.len());
    for (f, feat) in ontology.features.iter().enumerate() {
        let n_cats = feat.categories.len();
        let mut counts = [vec![0usize; n_cats], vec![0usize; n_cats], vec![0usize; n_cats]];
        for (frame, m) in frames {
            ontology.check_frame(frame)?;
            counts[m.index()][frame.values[f] as usize] += 1;
        }
        let rows: [Vec<f64>; 3] = std::array::from_fn(|h| {
            let total = label_counts[h] as f64 + alpha * n_cats as f64;
            counts[h]
                .iter()
                .map(|&c| (c as f64 + alpha) / total)
                .collect()
        });
        cond.push(rows);
    }

    let total = frames.len() as f64;
    Ok(LikelihoodModel {
        source: LikelihoodSource::Frequency,
        ontology_fingerprint: ontology.fingerprint(),
        prior: [
            label_counts[0] as f64 / total,
            label_counts[1] as f64 / total,
            label_counts[2] as f64 / total,
        ],
        cond,
    })
}

/// Reads conditional rows out of the embedding space: for each feature and
/// hypothesis, P(c|f,H) is the softmax over categories of
/// score(vehicle_H, relation_f, c) at the given temperature.
pub fn likelihoods_from_embeddings(
    model: &EmbeddingModel,
    ontology: &Ontology,
    prior: [f64; 3],
    temperature: f64,
) -> Result<LikelihoodModel, InferenceError> {
    if temperature <= 0.0 {
        return Err(InferenceError::Input("temperature must be positive".into()));
    }
    let mut cond = Vec::with_capacity(ontology.features.len());
    for feat in &ontology.features {
        let mut rows: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for h in MANEUVERS {
            let subject = corpus::hypothesis_subject(h);
            let scores = feat
                .categories
                .iter()
                .map(|c| model.score(&subject, &feat.relation, c))
                .collect::<Result<Vec<f64>, KgeError>>()?;
            rows[h.index()] = softmax(&scores, temperature);
        }
        cond.push(rows);
    }
    Ok(LikelihoodModel {
        source: LikelihoodSource::Embedding,
        ontology_fingerprint: ontology.fingerprint(),
        prior,
        cond,
    })
}

fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Shipped prediction fixture: thresholds calibrated on the synthetic
/// corpus for the ontology's lane count, plus the frequency-fit likelihoods.
pub fn fixture_likelihoods(
    ontology: &Ontology,
) -> Result<(Thresholds, LikelihoodModel), InferenceError> {
    let lane_count = ontology.features[crate::semantics::F_LANE_ID].categories.len() as u32;
    let samples = corpus::generate(lane_count, corpus::FIXTURE_SIZE, corpus::FIXTURE_SEED);
    let thresholds = corpus::calibrate_thresholds(&samples, &Thresholds::default());
    let frames = corpus::labeled_frames(&samples, &thresholds, ontology)?;
    let model = fit_likelihoods_frequency(&frames, ontology, 1.0)?;
    Ok((thresholds, model))
}

/// Declarative feasibility constraint: when `when_feature` has
/// `when_category`, `then_feature` must take one of `allowed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRule {
    pub reason: String,
    pub when_feature: String,
    pub when_category: String,
    pub then_feature: String,
    pub allowed: Vec<String>,
}

/// Rule resolved to category indices for fast checks.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    when_feature: usize,
    when_category: u8,
    then_feature: usize,
    allowed: Vec<u8>,
}

impl FeasibilityRule {
    pub fn compile(&self, ontology: &Ontology) -> Result<CompiledRule, InferenceError> {
        let find_feature = |name: &str| {
            ontology
                .features
                .iter()
                .position(|f| f.name == name)
                .ok_or_else(|| InferenceError::Vocabulary(format!("feature `{name}`")))
        };
        let when_feature = find_feature(&self.when_feature)?;
        let then_feature = find_feature(&self.then_feature)?;
        let when_category = ontology.category_of(when_feature, &self.when_category)?;
        let allowed = self
            .allowed
            .iter()
            .map(|c| ontology.category_of(then_feature, c))
            .collect::<Result<Vec<u8>, SemanticsError>>()?;
        Ok(CompiledRule {
            when_feature,
            when_category,
            then_feature,
            allowed,
        })
    }
}

impl CompiledRule {
    pub fn admits(&self, frame: &LinguisticFrame) -> bool {
        frame.values[self.when_feature] != self.when_category
            || self.allowed.contains(&frame.values[self.then_feature])
    }
}

/// The shipped rule bundle: edge lanes have no neighbor on their outer
/// side, so the outer-side TTCs must read lowRisk and neither argmax
/// feature may point at the missing lane.
pub fn edge_lane_rules(ontology: &Ontology) -> Vec<FeasibilityRule> {
    let lane_cats = &ontology.features[crate::semantics::F_LANE_ID].categories;
    let mut rules = Vec::new();
    let mut side = |lane_cat: &str, side_name: &str, gap_forbidden: &str, ttc_feats: [&str; 2]| {
        if !lane_cats.iter().any(|c| c == lane_cat) {
            return;
        }
        let allowed_lanes: Vec<String> = ["leftLane", "currentLane", "rightLane"]
            .iter()
            .filter(|c| **c != gap_forbidden)
            .map(|c| c.to_string())
            .collect();
        for feature in ["highest_frontal_gap", "highest_attraction"] {
            rules.push(FeasibilityRule {
                reason: format!("no {side_name} lane exists in the {lane_cat}"),
                when_feature: "lane_id".into(),
                when_category: lane_cat.into(),
                then_feature: feature.into(),
                allowed: allowed_lanes.clone(),
            });
        }
        for feature in ttc_feats {
            rules.push(FeasibilityRule {
                reason: format!("no {side_name} neighbor in the {lane_cat}"),
                when_feature: "lane_id".into(),
                when_category: lane_cat.into(),
                then_feature: feature.into(),
                allowed: vec!["lowRisk".into()],
            });
        }
    };
    side(
        "leftLane",
        "left",
        "leftLane",
        ["ttc_left_preceding", "ttc_left_following"],
    );
    side(
        "rightLane",
        "right",
        "rightLane",
        ["ttc_right_preceding", "ttc_right_following"],
    );
    rules
}

/// Odometer enumeration of feasible frames in ontology order: the last
/// feature cycles fastest, frames failing any rule are skipped.
pub struct FeasibleFrames {
    cards: Vec<u8>,
    rules: Vec<CompiledRule>,
    current: Option<Vec<u8>>,
}

impl FeasibleFrames {
    fn advance(cards: &[u8], values: &mut [u8]) -> bool {
        for i in (0..values.len()).rev() {
            values[i] += 1;
            if values[i] < cards[i] {
                return true;
            }
            values[i] = 0;
        }
        false
    }
}

impl Iterator for FeasibleFrames {
    type Item = LinguisticFrame;

    fn next(&mut self) -> Option<LinguisticFrame> {
        loop {
            let values = self.current.as_mut()?;
            let candidate = LinguisticFrame {
                values: values.clone(),
            };
            let more = Self::advance(&self.cards, values);
            if !more {
                self.current = None;
            }
            if self.rules.iter().all(|r| r.admits(&candidate)) {
                return Some(candidate);
            }
            if self.current.is_none() {
                return None;
            }
        }
    }
}

pub fn enumerate_feasible(
    ontology: &Ontology,
    rules: &[FeasibilityRule],
) -> Result<FeasibleFrames, InferenceError> {
    ontology.validate()?;
    let compiled = rules
        .iter()
        .map(|r| r.compile(ontology))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeasibleFrames {
        cards: ontology
            .features
            .iter()
            .map(|f| f.categories.len() as u8)
            .collect(),
        rules: compiled,
        current: Some(vec![0; ontology.features.len()]),
    })
}

pub fn count_feasible(ontology: &Ontology, rules: &[FeasibilityRule]) -> Result<u64, InferenceError> {
    Ok(enumerate_feasible(ontology, rules)?.count() as u64)
}

/// One compiled prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub maneuver: Maneuver,
    pub posterior: [f64; 3],
}

struct TableRow {
    values: Vec<u8>,
    key: String,
    prediction: Prediction,
}

/// Compiled map from every feasible frame to its prediction, carrying both
/// the row store scanned column-by-column and the keyed hash index.
pub struct LookupTable {
    pub fingerprint: String,
    feature_names: Vec<String>,
    rows: Vec<TableRow>,
    index: HashMap<String, usize>,
    duplicate_keys: HashSet<String>,
}

/// Scan result with its cost accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanHit {
    pub prediction: Prediction,
    pub rows_inspected: usize,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"CPLT0001";

impl LookupTable {
    /// Runs the predictor over every feasible frame in enumeration order.
    pub fn build<P>(
        ontology: &Ontology,
        rules: &[FeasibilityRule],
        predictor: P,
    ) -> Result<LookupTable, InferenceError>
    where
        P: Fn(&LinguisticFrame) -> Result<ManeuverPosterior, InferenceError>,
    {
        let mut rows = Vec::new();
        let mut index = HashMap::new();
        for frame in enumerate_feasible(ontology, rules)? {
            let key = ontology.frame_key(&frame);
            let post = predictor(&frame).map_err(|e| InferenceError::PredictorFailure {
                key: key.clone(),
                message: e.to_string(),
            })?;
            let row = TableRow {
                values: frame.values,
                key: key.clone(),
                prediction: Prediction {
                    maneuver: post.argmax,
                    posterior: post.probs,
                },
            };
            index.insert(key, rows.len());
            rows.push(row);
        }
        Ok(LookupTable {
            fingerprint: ontology.fingerprint(),
            feature_names: ontology.features.iter().map(|f| f.name.clone()).collect(),
            rows,
            index,
            duplicate_keys: HashSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Frame of the row at `i`, for seeded query sampling.
    pub fn frame_at(&self, i: usize) -> LinguisticFrame {
        LinguisticFrame {
            values: self.rows[i].values.clone(),
        }
    }

    /// O(n) row scan: every row is matched by the conjunction of the twelve
    /// column equalities until the single matching row is found.
    pub fn query_scan(&self, frame: &LinguisticFrame) -> Result<ScanHit, InferenceError> {
        let key_check = |key: &str| self.duplicate_keys.contains(key);
        let mut inspected = 0usize;
        for row in &self.rows {
            inspected += 1;
            if row.values == frame.values {
                if key_check(&row.key) {
                    return Err(InferenceError::CorruptTable(format!(
                        "key `{}` appears more than once",
                        row.key
                    )));
                }
                return Ok(ScanHit {
                    prediction: row.prediction,
                    rows_inspected: inspected,
                });
            }
        }
        Err(InferenceError::InfeasibleFrame(format!("{:?}", frame.values)))
    }

    /// O(1) keyed lookup on the concatenated frame key.
    pub fn query_hash(
        &self,
        frame: &LinguisticFrame,
        ontology: &Ontology,
    ) -> Result<Prediction, InferenceError> {
        let key = ontology.frame_key(frame);
        self.query_hash_key(&key)
    }

    pub fn query_hash_key(&self, key: &str) -> Result<Prediction, InferenceError> {
        if self.duplicate_keys.contains(key) {
            return Err(InferenceError::CorruptTable(format!(
                "key `{key}` appears more than once"
            )));
        }
        self.index
            .get(key)
            .map(|&i| self.rows[i].prediction)
            .ok_or_else(|| InferenceError::InfeasibleFrame(key.to_string()))
    }

    /// CSV artifact: twelve feature columns, the argmax maneuver, and the
    /// three posterior columns; row order is the enumeration order.
    pub fn write_csv<W: Write>(&self, writer: W, ontology: &Ontology) -> Result<(), InferenceError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("maneuver".into());
        header.push("p_laneKeep".into());
        header.push("p_leftLaneChange".into());
        header.push("p_rightLaneChange".into());
        w.write_record(&header).map_err(|e| InferenceError::Io(e.to_string()))?;
        for row in &self.rows {
            let mut record: Vec<String> = row
                .values
                .iter()
                .enumerate()
                .map(|(f, &v)| ontology.features[f].categories[v as usize].clone())
                .collect();
            record.push(row.prediction.maneuver.label().to_string());
            for p in row.prediction.posterior {
                record.push(format!("{p}"));
            }
            w.write_record(&record).map_err(|e| InferenceError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| InferenceError::Io(e.to_string()))?;
        Ok(())
    }

    /// Loads the CSV artifact back. Duplicate keys are remembered and
    /// reported as `CorruptTable` when queried.
    pub fn load_csv<R: Read>(reader: R, ontology: &Ontology) -> Result<LookupTable, InferenceError> {
        let mut r = csv::Reader::from_reader(reader);
        let n_features = ontology.features.len();
        let mut rows = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut duplicate_keys = HashSet::new();
        for record in r.records() {
            let record = record.map_err(|e| InferenceError::Io(e.to_string()))?;
            if record.len() != n_features + 4 {
                return Err(InferenceError::CorruptTable(format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    n_features + 4
                )));
            }
            let mut values = Vec::with_capacity(n_features);
            for f in 0..n_features {
                values.push(ontology.category_of(f, &record[f])?);
            }
            let frame = LinguisticFrame { values };
            let key = ontology.frame_key(&frame);
            let maneuver = Maneuver::from_label(&record[n_features])?;
            let mut posterior = [0.0; 3];
            for (i, p) in posterior.iter_mut().enumerate() {
                *p = record[n_features + 1 + i]
                    .parse::<f64>()
                    .map_err(|e| InferenceError::CorruptTable(e.to_string()))?;
            }
            if index.insert(key.clone(), rows.len()).is_some() {
                duplicate_keys.insert(key.clone());
            }
            rows.push(TableRow {
                values: frame.values,
                key,
                prediction: Prediction { maneuver, posterior },
            });
        }
        Ok(LookupTable {
            fingerprint: ontology.fingerprint(),
            feature_names: ontology.features.iter().map(|f| f.name.clone()).collect(),
            rows,
            index,
            duplicate_keys,
        })
    }

    /// Binary snapshot with the ontology fingerprint in the header, so a
    /// table built for a different ontology is rejected at load.
    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> Result<(), InferenceError> {
        let io = |e: std::io::Error| InferenceError::Io(e.to_string());
        writer.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        let fp = self.fingerprint.as_bytes();
        writer.write_all(&(fp.len() as u32).to_be_bytes()).map_err(io)?;
        writer.write_all(fp).map_err(io)?;
        writer.write_all(&(self.rows.len() as u64).to_be_bytes()).map_err(io)?;
        for row in &self.rows {
            let key = row.key.as_bytes();
            writer.write_all(&(key.len() as u32).to_be_bytes()).map_err(io)?;
            writer.write_all(key).map_err(io)?;
            writer.write_all(&[row.prediction.maneuver.index() as u8]).map_err(io)?;
            for p in row.prediction.posterior {
                writer.write_all(&p.to_be_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load_snapshot<R: Read>(reader: R, ontology: &Ontology) -> Result<LookupTable, InferenceError> {
        let mut r = BufReader::new(reader);
        let io = |e: std::io::Error| InferenceError::Io(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(InferenceError::CorruptTable("bad snapshot magic".into()));
        }
        let mut len4 = [0u8; 4];
        r.read_exact(&mut len4).map_err(io)?;
        let mut fp = vec![0u8; u32::from_be_bytes(len4) as usize];
        r.read_exact(&mut fp).map_err(io)?;
        let found = String::from_utf8(fp).map_err(|e| InferenceError::CorruptTable(e.to_string()))?;
        let expected = ontology.fingerprint();
        if found != expected {
            return Err(InferenceError::StaleTable { expected, found });
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8).map_err(io)?;
        let count = u64::from_be_bytes(len8) as usize;
        let mut rows = Vec::with_capacity(count);
        let mut index = HashMap::with_capacity(count);
        let mut duplicate_keys = HashSet::new();
        for _ in 0..count {
            r.read_exact(&mut len4).map_err(io)?;
            let mut key_bytes = vec![0u8; u32::from_be_bytes(len4) as usize];
            r.read_exact(&mut key_bytes).map_err(io)?;
            let key = String::from_utf8(key_bytes)
                .map_err(|e| InferenceError::CorruptTable(e.to_string()))?;
            let frame = ontology.parse_key(&key)?;
            let mut m = [0u8; 1];
            r.read_exact(&mut m).map_err(io)?;
            let maneuver = *MANEUVERS
                .get(m[0] as usize)
                .ok_or_else(|| InferenceError::CorruptTable("bad maneuver index".into()))?;
            let mut posterior = [0.0; 3];
            for p in posterior.iter_mut() {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(io)?;
                *p = f64::from_be_bytes(b);
            }
            if index.insert(key.clone(), rows.len()).is_some() {
                duplicate_keys.insert(key.clone());
            }
            rows.push(TableRow {
                values: frame.values,
                key,
                prediction: Prediction { maneuver, posterior },
            });
        }
        Ok(LookupTable {
            fingerprint: found,
            feature_names: ontology.features.iter().map(|f| f.name.clone()).collect(),
            rows,
            index,
            duplicate_keys,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryBackend {
    Scan,
    Hash,
}

/// Monotonic-clock latency summary of one benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub backend: QueryBackend,
    pub table_len: usize,
    pub queries: usize,
    pub mean_ns: f64,
    pub p50_ns: f64,
    pub p99_ns: f64,
    pub mean_rows_inspected: f64,
}

/// Benchmarks one backend over seeded uniform queries drawn from the
/// table's own feasible set, after a warm-up pass.
pub fn bench_query(
    table: &LookupTable,
    backend: QueryBackend,
    queries: usize,
    seed: u64,
) -> Result<LatencyStats, InferenceError> {
    use rand::{Rng, SeedableRng};
    if table.is_empty() {
        return Err(InferenceError::Input("cannot benchmark an empty table".into()));
    }
    if queries < 1000 {
        return Err(InferenceError::Input("benchmark needs at least 1000 queries".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..queries).map(|_| rng.random_range(0..table.len())).collect();
    let keys: Vec<String> = picks.iter().map(|&i| table.rows[i].key.clone()).collect();
    let frames: Vec<LinguisticFrame> = picks.iter().map(|&i| table.frame_at(i)).collect();

    // Warm-up: touch the query path and the table memory once, unmeasured.
    let warmup = queries.min(256);
    for i in 0..warmup {
        match backend {
            QueryBackend::Scan => {
                table.query_scan(&frames[i])?;
            }
            QueryBackend::Hash => {
                table.query_hash_key(&keys[i])?;
            }
        }
    }

    let mut samples_ns = Vec::with_capacity(queries);
    let mut total_rows = 0usize;
    match backend {
        QueryBackend::Scan => {
            for frame in &frames {
                let start = Instant::now();
                let hit = table.query_scan(frame)?;
                samples_ns.push(start.elapsed().as_nanos() as u64);
                total_rows += hit.rows_inspected;
            }
        }
        QueryBackend::Hash => {
            for key in &keys {
                let start = Instant::now();
                let out = table.query_hash_key(key)?;
                samples_ns.push(start.elapsed().as_nanos() as u64);
                std::hint::black_box(out);
                total_rows += 1;
            }
        }
    }
    samples_ns.sort_unstable();
    let mean_ns = samples_ns.iter().sum::<u64>() as f64 / samples_ns.len() as f64;
    let pct = |p: f64| samples_ns[((samples_ns.len() - 1) as f64 * p) as usize] as f64;
    Ok(LatencyStats {
        backend,
        table_len: table.len(),
        queries,
        mean_ns,
        p50_ns: pct(0.50),
        p99_ns: pct(0.99),
        mean_rows_inspected: total_rows as f64 / queries as f64,
    })
}
