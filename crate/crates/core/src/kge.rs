//! Translation-based knowledge-graph embeddings: TransE scoring, Adam
//! training with self-adversarial negative sampling, and MRR evaluation for
//! early stopping.

use crate::semantics::Triple;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KgeError {
    #[error("label `{0}` is not in the vocabulary")]
    Vocabulary(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("io: {0}")]
    Io(String),
}

/// Dissimilarity used inside the TransE score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dissimilarity {
    #[default]
    L1,
    L2,
}

/// Entity/relation vocabularies with deduplicated train/validation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleStore {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    pub train: Vec<[usize; 3]>,
    pub valid: Vec<[usize; 3]>,
}

impl TripleStore {
    /// Builds vocabularies, deduplicates facts, and splits them into train
    /// and validation sets with a seeded shuffle.
    pub fn from_triples(
        triples: &[Triple],
        valid_fraction: f64,
        seed: u64,
    ) -> Result<Self, KgeError> {
        if triples.is_empty() {
            return Err(KgeError::Input("empty triple corpus".into()));
        }
        let mut entity_set = BTreeSet::new();
        let mut relation_set = BTreeSet::new();
        let mut unique = BTreeSet::new();
        for t in triples {
            entity_set.insert(t.subject.clone());
            entity_set.insert(t.object.clone());
            relation_set.insert(t.relation.clone());
            unique.insert((t.subject.clone(), t.relation.clone(), t.object.clone()));
        }
        let entities: Vec<String> = entity_set.into_iter().collect();
        let relations: Vec<String> = relation_set.into_iter().collect();
        let entity_index: HashMap<String, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let relation_index: HashMap<String, usize> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        let mut facts: Vec<[usize; 3]> = unique
            .into_iter()
            .map(|(s, r, o)| [entity_index[&s], relation_index[&r], entity_index[&o]])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffle(&mut facts, &mut rng);
        let n_valid = ((facts.len() as f64 * valid_fraction).round() as usize)
            .min(facts.len().saturating_sub(1));
        let valid = facts.split_off(facts.len() - n_valid);
        Ok(TripleStore {
            entities,
            relations,
            entity_index,
            relation_index,
            train: facts,
            valid,
        })
    }

    pub fn entity_id(&self, label: &str) -> Result<usize, KgeError> {
        self.entity_index
            .get(label)
            .copied()
            .ok_or_else(|| KgeError::Vocabulary(label.to_string()))
    }

    pub fn relation_id(&self, label: &str) -> Result<usize, KgeError> {
        self.relation_index
            .get(label)
            .copied()
            .ok_or_else(|| KgeError::Vocabulary(label.to_string()))
    }
}

fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Learned embeddings plus their vocabularies; serializable as a JSON
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub dim: usize,
    pub dissimilarity: Dissimilarity,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub entity_vecs: Vec<Vec<f64>>,
    pub relation_vecs: Vec<Vec<f64>>,
    #[serde(skip)]
    entity_index: HashMap<String, usize>,
    #[serde(skip)]
    relation_index: HashMap<String, usize>,
}

impl EmbeddingModel {
    fn rebuild_index(&mut self) {
        self.entity_index = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        self.relation_index = self
            .relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
    }

    fn dissim(&self, h: usize, r: usize, t: usize) -> f64 {
        let eh = &self.entity_vecs[h];
        let er = &self.relation_vecs[r];
        let et = &self.entity_vecs[t];
        match self.dissimilarity {
            Dissimilarity::L1 => (0..self.dim).map(|k| (eh[k] + er[k] - et[k]).abs()).sum(),
            Dissimilarity::L2 => (0..self.dim)
                .map(|k| (eh[k] + er[k] - et[k]).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// TransE plausibility: −‖e_h + e_r − e_t‖. Higher is more plausible.
    pub fn score_ids(&self, h: usize, r: usize, t: usize) -> f64 {
        -self.dissim(h, r, t)
    }

    pub fn score(&self, h: &str, r: &str, t: &str) -> Result<f64, KgeError> {
        let h = self.entity_id(h)?;
        let r = self.relation_id(r)?;
        let t = self.entity_id(t)?;
        Ok(self.score_ids(h, r, t))
    }

    pub fn entity_id(&self, label: &str) -> Result<usize, KgeError> {
        self.entity_index
            .get(label)
            .copied()
            .ok_or_else(|| KgeError::Vocabulary(label.to_string()))
    }

    pub fn relation_id(&self, label: &str) -> Result<usize, KgeError> {
        self.relation_index
            .get(label)
            .copied()
            .ok_or_else(|| KgeError::Vocabulary(label.to_string()))
    }

    pub fn save_json<W: std::io::Write>(&self, writer: W) -> Result<(), KgeError> {
        serde_json::to_writer(writer, self).map_err(|e| KgeError::Io(e.to_string()))
    }

    pub fn load_json<R: std::io::Read>(reader: R) -> Result<Self, KgeError> {
        let mut model: EmbeddingModel =
            serde_json::from_reader(reader).map_err(|e| KgeError::Io(e.to_string()))?;
        model.rebuild_index();
        Ok(model)
    }
}

/// Training hyperparameters. Defaults follow the deployed configuration:
/// embedding size 100, Adam at 0.0005, batches of 10,000, negatives 5:1,
/// self-adversarial weighting, early stopping on validation MRR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub adversarial_temperature: f64,
    pub max_epochs: usize,
    /// Epochs without validation-MRR improvement before stopping.
    pub patience: usize,
    pub dissimilarity: Dissimilarity,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            learning_rate: 0.0005,
            batch_size: 10_000,
            negatives_per_positive: 5,
            adversarial_temperature: 1.0,
            max_epochs: 100,
            patience: 10,
            dissimilarity: Dissimilarity::L1,
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    fn new(rows: usize, dim: usize) -> Self {
        Adam {
            m: vec![vec![0.0; dim]; rows],
            v: vec![vec![0.0; dim]; rows],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            for k in 0..params[i].len() {
                let g = grads[i][k];
                self.m[i][k] = B1 * self.m[i][k] + (1.0 - B1) * g;
                self.v[i][k] = B2 * self.v[i][k] + (1.0 - B2) * g * g;
                let m_hat = self.m[i][k] / bc1;
                let v_hat = self.v[i][k] / bc2;
                params[i][k] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

fn normalize_rows(rows: &mut [Vec<f64>]) {
    for row in rows {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
    }
}

fn init_model(store: &TripleStore, config: &TrainConfig, rng: &mut ChaCha8Rng) -> EmbeddingModel {
    let bound = 6.0 / (config.dim as f64).sqrt();
    let mut draw = |rows: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..config.dim).map(|_| rng.random_range(-bound..bound)).collect())
            .collect()
    };
    let mut entity_vecs = draw(store.entities.len());
    let mut relation_vecs = draw(store.relations.len());
    normalize_rows(&mut relation_vecs);
    normalize_rows(&mut entity_vecs);
    let mut model = EmbeddingModel {
        dim: config.dim,
        dissimilarity: config.dissimilarity,
        entities: store.entities.clone(),
        relations: store.relations.clone(),
        entity_vecs,
        relation_vecs,
        entity_index: HashMap::new(),
        relation_index: HashMap::new(),
    };
    model.rebuild_index();
    model
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

/// Direction of the dissimilarity gradient w.r.t. (e_h + e_r − e_t).
fn residual_grad(model: &EmbeddingModel, h: usize, r: usize, t: usize) -> Vec<f64> {
    let eh = &model.entity_vecs[h];
    let er = &model.relation_vecs[r];
    let et = &model.entity_vecs[t];
    let residual: Vec<f64> = (0..model.dim).map(|k| eh[k] + er[k] - et[k]).collect();
    match model.dissimilarity {
        Dissimilarity::L1 => residual.iter().map(|x| x.signum()).collect(),
        Dissimilarity::L2 => {
            let norm = residual.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            residual.iter().map(|x| x / norm).collect()
        }
    }
}

/// Margin-free self-adversarial loss of one positive with its negatives:
/// softplus(d_pos) + Σ w_i·softplus(−d_neg_i), with w the softmax of the
/// temperature-scaled negative scores (detached, RotatE-style).
struct BatchGrads {
    entities: Vec<Vec<f64>>,
    relations: Vec<Vec<f64>>,
    loss: f64,
}

fn batch_pass(
    model: &EmbeddingModel,
    batch: &[[usize; 3]],
    negatives: &[Vec<[usize; 3]>],
    temperature: f64,
) -> BatchGrads {
    let mut grads = BatchGrads {
        entities: vec![vec![0.0; model.dim]; model.entity_vecs.len()],
        relations: vec![vec![0.0; model.dim]; model.relation_vecs.len()],
        loss: 0.0,
    };
    let scale = 1.0 / batch.len() as f64;
    for (pos, negs) in batch.iter().zip(negatives) {
        let [h, r, t] = *pos;
        let d_pos = model.dissim(h, r, t);
        grads.loss += scale * softplus(d_pos);
        let coeff = scale * sigmoid(d_pos);
        let dir = residual_grad(model, h, r, t);
        for k in 0..model.dim {
            grads.entities[h][k] += coeff * dir[k];
            grads.relations[r][k] += coeff * dir[k];
            grads.entities[t][k] -= coeff * dir[k];
        }

        let d_negs: Vec<f64> = negs.iter().map(|&[nh, nr, nt]| model.dissim(nh, nr, nt)).collect();
        // Self-adversarial weights over the negatives (treated as constants).
        let max_logit = d_negs
            .iter()
            .map(|d| -d / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = d_negs.iter().map(|d| (-d / temperature - max_logit).exp()).collect();
        let z: f64 = exps.iter().sum();
        for ((neg, d_neg), w) in negs.iter().zip(&d_negs).zip(exps.iter().map(|e| e / z)) {
            let [nh, nr, nt] = *neg;
            grads.loss += scale * w * softplus(-d_neg);
            let coeff = -scale * w * sigmoid(-d_neg);
            let dir = residual_grad(model, nh, nr, nt);
            for k in 0..model.dim {
                grads.entities[nh][k] += coeff * dir[k];
                grads.relations[nr][k] += coeff * dir[k];
                grads.entities[nt][k] -= coeff * dir[k];
            }
        }
    }
    grads
}

fn draw_negatives(
    positives: &[[usize; 3]],
    n_entities: usize,
    per_positive: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<[usize; 3]>> {
    positives
        .iter()
        .map(|&[h, r, t]| {
            (0..per_positive)
                .map(|_| {
                    let corrupt = rng.random_range(0..n_entities);
                    if rng.random::<bool>() {
                        [corrupt, r, t]
                    } else {
                        [h, r, corrupt]
                    }
                })
                .collect()
        })
        .collect()
}

/// Trains TransE on the store. Deterministic for a given seed; returns the
/// checkpoint with the best validation MRR seen (the seeded initialization
/// counts as the first checkpoint, so the result never ranks worse than it).
pub fn train(store: &TripleStore, config: &TrainConfig, seed: u64) -> Result<EmbeddingModel, KgeError> {
    if store.train.is_empty() {
        return Err(KgeError::Input("store has no training triples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = init_model(store, config, &mut rng);
    let mut adam_e = Adam::new(model.entity_vecs.len(), config.dim);
    let mut adam_r = Adam::new(model.relation_vecs.len(), config.dim);

    let eval_set = if store.valid.is_empty() {
        &store.train
    } else {
        &store.valid
    };
    let mut best_mrr = mrr(&model, eval_set, CorruptionSide::Both);
    let mut best = model.clone();
    let mut stale = 0usize;

    let mut order: Vec<usize> = (0..store.train.len()).collect();
    for _epoch in 0..config.max_epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<[usize; 3]> = chunk.iter().map(|&i| store.train[i]).collect();
            let negatives = draw_negatives(
                &batch,
                model.entity_vecs.len(),
                config.negatives_per_positive,
                &mut rng,
            );
            let grads = batch_pass(&model, &batch, &negatives, config.adversarial_temperature);
            adam_e.step(&mut model.entity_vecs, &grads.entities, config.learning_rate);
            adam_r.step(&mut model.relation_vecs, &grads.relations, config.learning_rate);
            normalize_rows(&mut model.entity_vecs);
        }
        let score = mrr(&model, eval_set, CorruptionSide::Both);
        if score > best_mrr {
            best_mrr = score;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// One optimizer step on a fixed batch; exposed for convergence checks.
pub fn train_steps_on_batch(
    store: &TripleStore,
    config: &TrainConfig,
    seed: u64,
    steps: usize,
) -> Result<Vec<f64>, KgeError> {
    if store.train.is_empty() {
        return Err(KgeError::Input("store has no training triples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = init_model(store, config, &mut rng);
    let mut adam_e = Adam::new(model.entity_vecs.len(), config.dim);
    let mut adam_r = Adam::new(model.relation_vecs.len(), config.dim);
    let batch: Vec<[usize; 3]> = store
        .train
        .iter()
        .take(config.batch_size.max(1))
        .copied()
        .collect();
    let negatives = draw_negatives(
        &batch,
        model.entity_vecs.len(),
        config.negatives_per_positive,
        &mut rng,
    );
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let grads = batch_pass(&model, &batch, &negatives, config.adversarial_temperature);
        losses.push(grads.loss);
        adam_e.step(&mut model.entity_vecs, &grads.entities, config.learning_rate);
        adam_r.step(&mut model.relation_vecs, &grads.relations, config.learning_rate);
        normalize_rows(&mut model.entity_vecs);
    }
    let final_pass = batch_pass(&model, &batch, &negatives, config.adversarial_temperature);
    losses.push(final_pass.loss);
    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionSide {
    Head,
    Tail,
    Both,
}

/// Pessimistic reciprocal rank: ties count against the true candidate.
pub fn reciprocal_rank(true_score: f64, candidate_scores: &[f64]) -> f64 {
    let mut rank = 1usize;
    for &s in candidate_scores {
        if s >= true_score {
            rank += 1;
        }
    }
    1.0 / rank as f64
}

/// Raw (unfiltered) mean reciprocal rank over all corruptions of the chosen
/// side(s).
pub fn mrr(model: &EmbeddingModel, eval: &[[usize; 3]], side: CorruptionSide) -> f64 {
    assert!(!eval.is_empty(), "evaluation set must be non-empty");
    let n_entities = model.entity_vecs.len();
    let mut total = 0.0;
    let mut count = 0usize;
    let sides: &[CorruptionSide] = match side {
        CorruptionSide::Both => &[CorruptionSide::Head, CorruptionSide::Tail],
        CorruptionSide::Head => &[CorruptionSide::Head],
        CorruptionSide::Tail => &[CorruptionSide::Tail],
    };
    for &[h, r, t] in eval {
        for s in sides {
            let true_score = model.score_ids(h, r, t);
            let mut candidates = Vec::with_capacity(n_entities - 1);
            for e in 0..n_entities {
                match s {
                    CorruptionSide::Head => {
                        if e != h {
                            candidates.push(model.score_ids(e, r, t));
                        }
                    }
                    _ => {
                        if e != t {
                            candidates.push(model.score_ids(h, r, e));
                        }
                    }
                }
            }
            total += reciprocal_rank(true_score, &candidates);
            count += 1;
        }
    }
    total / count as f64
}

/// Structured toy graph for sanity tests: entities fall into groups, one
/// relation keeps pairs within a group, another points to the next group.
pub fn toy_corpus(n_triples: usize, seed: u64) -> Vec<Triple> {
    let groups = 4usize;
    let per_group = 10usize;
    let entity = |g: usize, i: usize| format!("e{}_{}", g, i);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < n_triples {
        let g = rng.random_range(0..groups);
        let i = rng.random_range(0..per_group);
        let j = rng.random_range(0..per_group);
        if rng.random::<bool>() {
            set.insert((entity(g, i), "sameGroup".to_string(), entity(g, j)));
        } else {
            set.insert((
                entity(g, i),
                "nextGroup".to_string(),
                entity((g + 1) % groups, j),
            ));
        }
    }
    set.into_iter()
        .map(|(s, r, o)| Triple::new(s, r, o))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_store() -> TripleStore {
        TripleStore::from_triples(&toy_corpus(200, 9), 0.2, 1).unwrap()
    }

    fn fast_config() -> TrainConfig {
        TrainConfig {
            dim: 32,
            learning_rate: 0.02,
            max_epochs: 60,
            patience: 60,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn score_is_zero_for_exact_translation() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 0,
            dim: 4,
            ..TrainConfig::default()
        };
        let mut model = train(&store, &cfg, 3).unwrap();
        let h = 0;
        let t = 1;
        model.relation_vecs[0] = model.entity_vecs[t]
            .iter()
            .zip(&model.entity_vecs[h])
            .map(|(a, b)| a - b)
            .collect();
        assert!(model.score_ids(h, 0, t).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_l1_score() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 0,
            dim: 3,
            ..TrainConfig::default()
        };
        let mut model = train(&store, &cfg, 3).unwrap();
        model.entity_vecs[0] = vec![1.0, 0.0, 0.0];
        model.relation_vecs[0] = vec![0.0, 1.0, 0.0];
        model.entity_vecs[1] = vec![1.0, 1.0, 0.0];
        assert_eq!(model.score_ids(0, 0, 1), 0.0);
        // One-coordinate perturbation without a sign crossing moves the
        // score by exactly −|δ|.
        model.entity_vecs[1][2] = 0.25;
        assert!((model.score_ids(0, 0, 1) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn score_is_translation_invariant() {
        let store = toy_store();
        let cfg = fast_config();
        let mut model = train(&store, &cfg, 3).unwrap();
        let before = model.score_ids(2, 0, 7);
        for row in [2usize, 7] {
            for k in 0..model.dim {
                model.entity_vecs[row][k] += 0.37;
            }
        }
        let after = model.score_ids(2, 0, 7);
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_returns_seeded_initialization() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..fast_config()
        };
        let a = train(&store, &cfg, 5).unwrap();
        let b = train(&store, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = train(&store, &cfg, 6).unwrap();
        assert_ne!(a.entity_vecs, c.entity_vecs);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 3,
            ..fast_config()
        };
        let a = train(&store, &cfg, 11).unwrap();
        let b = train(&store, &cfg, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entities_stay_unit_norm_during_training() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 3,
            ..fast_config()
        };
        let model = train(&store, &cfg, 11).unwrap();
        for row in &model.entity_vecs {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm}");
        }
    }

    #[test]
    fn loss_decreases_over_first_steps_at_default_lr() {
        let store = toy_store();
        let cfg = TrainConfig {
            dim: 32,
            ..TrainConfig::default()
        };
        let losses = train_steps_on_batch(&store, &cfg, 13, 10).unwrap();
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "losses {losses:?}"
        );
    }

    #[test]
    fn single_triple_graph_ranks_truth_above_corruption_mean() {
        let triples = vec![
            Triple::new("a", "r", "b"),
            Triple::new("c", "r", "d"),
            Triple::new("e", "r", "f"),
        ];
        let store = TripleStore::from_triples(&triples, 0.0, 1).unwrap();
        let cfg = TrainConfig {
            dim: 16,
            learning_rate: 0.05,
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        let model = train(&store, &cfg, 2).unwrap();
        for &[h, r, t] in &store.train {
            let true_score = model.score_ids(h, r, t);
            let mut corrupted = Vec::new();
            for e in 0..store.entities.len() {
                if e != t {
                    corrupted.push(model.score_ids(h, r, e));
                }
                if e != h {
                    corrupted.push(model.score_ids(e, r, t));
                }
            }
            let mean = corrupted.iter().sum::<f64>() / corrupted.len() as f64;
            assert!(true_score > mean);
        }
    }

    #[test]
    fn perfect_ranking_gives_mrr_one() {
        // candidate scores all strictly below the true score
        assert_eq!(reciprocal_rank(1.0, &[0.5, 0.2, -3.0]), 1.0);
    }

    #[test]
    fn fourth_rank_gives_quarter() {
        assert_eq!(reciprocal_rank(0.0, &[1.0, 2.0, 3.0, -1.0]), 0.25);
    }

    #[test]
    fn ties_rank_pessimistically() {
        assert_eq!(reciprocal_rank(1.0, &[1.0, 0.0]), 0.5);
    }

    #[test]
    fn random_scores_match_harmonic_baseline() {
        // E[1/rank] over a uniform random rank among V candidates is H(V)/V.
        let v = 40usize;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut total = 0.0;
        let trials = 20_000;
        for _ in 0..trials {
            let true_score: f64 = rng.random();
            let others: Vec<f64> = (0..v - 1).map(|_| rng.random()).collect();
            total += reciprocal_rank(true_score, &others);
        }
        let mc = total / trials as f64;
        let harmonic: f64 = (1..=v).map(|i| 1.0 / i as f64).sum::<f64>() / v as f64;
        assert!((mc - harmonic).abs() < 0.01, "mc {mc} vs H(V)/V {harmonic}");
    }

    #[test]
    fn mrr_is_invariant_under_monotone_transform() {
        let true_score = 0.3;
        let candidates = [0.1, 0.9, -0.5, 0.3, 0.2];
        let f = |x: f64| (3.0 * x).exp() + 1.0;
        let mapped: Vec<f64> = candidates.iter().map(|&x| f(x)).collect();
        assert_eq!(
            reciprocal_rank(true_score, &candidates),
            reciprocal_rank(f(true_score), &mapped)
        );
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(TripleStore::from_triples(&[], 0.2, 1).is_err());
    }

    #[test]
    fn unknown_labels_are_vocabulary_errors() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..fast_config()
        };
        let model = train(&store, &cfg, 5).unwrap();
        assert!(matches!(
            model.score("nope", "sameGroup", "e0_0"),
            Err(KgeError::Vocabulary(_))
        ));
    }

    #[test]
    fn checkpoint_round_trips_through_json() {
        let store = toy_store();
        let cfg = TrainConfig {
            max_epochs: 1,
            ..fast_config()
        };
        let model = train(&store, &cfg, 5).unwrap();
        let mut buf = Vec::new();
        model.save_json(&mut buf).unwrap();
        let back = EmbeddingModel::load_json(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            back.score("e0_0", "sameGroup", "e0_1").unwrap(),
            model.score("e0_0", "sameGroup", "e0_1").unwrap()
        );
    }
}
