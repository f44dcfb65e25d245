//! BiLSTM pair classifier.
//!
//! A window is embedded token by token as `[word ; POS]`, run through one
//! bidirectional LSTM layer, and the forward/backward states at the two
//! event anchors are concatenated with the normalized token distance. A
//! one-hidden-layer tanh MLP maps that to logits over the label vocabulary.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabelSchema};
use crate::embed::{embed_tokens, EmbeddingProvider, PosEmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{score, EvalReport, Prediction, PredictionRecord};
use crate::pairgen::{eval_pairs, CandidatePair, PairSet};
use crate::tensor::{lstm_sequence, softmax, Adam, Checkpoint, LstmParams, LstmWeights, Mode, NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairClassifierConfig {
    /// LSTM state size per direction.
    pub hidden_size: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub pos_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for PairClassifierConfig {
    fn default() -> Self {
        PairClassifierConfig {
            hidden_size: 40,
            mlp_hidden: 40,
            dropout: 0.6,
            pos_dim: 20,
            lr: 0.0005,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl PairClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.hidden_size == 0 {
            problems.push("hidden_size must be at least 1".to_string());
        }
        if self.mlp_hidden == 0 {
            problems.push("mlp_hidden must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.pos_dim == 0 {
            problems.push("pos_dim must be at least 1".to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// A candidate pair with its frozen word vectors and POS rows resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub words: Vec<Vec<f64>>,
    pub tags: Vec<usize>,
    pub src_pos: usize,
    pub tgt_pos: usize,
    pub x_dist: f64,
    pub gold: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Micro-F1 on the dev set, when one was given.
    pub dev_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Returned by a training monitor after each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: PairClassifierConfig,
    schema: String,
    pos_tags: Vec<String>,
    word_dim: usize,
}

#[derive(Clone, Debug)]
pub struct PairClassifier {
    config: PairClassifierConfig,
    schema: LabelSchema,
    word_dim: usize,
    store: ParamStore,
    pos: PosEmbeddingTable,
    fwd: LstmParams,
    bwd: LstmParams,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

struct Weights {
    fwd: LstmWeights,
    bwd: LstmWeights,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream seed for one (epoch, example) slot.
fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ a) ^ b)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl PairClassifier {
    pub fn new<'a, I>(config: PairClassifierConfig, schema: &LabelSchema, word_dim: usize, pos_tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        config.validate()?;
        if word_dim == 0 {
            return Err(Error::Config("word embedding dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let pos = PosEmbeddingTable::new(&mut store, pos_tags, config.pos_dim, &mut rng);
        let input = word_dim + config.pos_dim;
        let h = config.hidden_size;
        let fwd = LstmParams::init(&mut store, "lstm.forward", input, h, &mut rng);
        let bwd = LstmParams::init(&mut store, "lstm.backward", input, h, &mut rng);
        let mlp_in = 4 * h + 1;
        let bound1 = 1.0 / (mlp_in as f64).sqrt();
        let w1 = store.add_uniform("mlp.hidden.weight", config.mlp_hidden, mlp_in, bound1, &mut rng);
        let b1 = store.add_uniform("mlp.hidden.bias", config.mlp_hidden, 1, bound1, &mut rng);
        let bound2 = 1.0 / (config.mlp_hidden as f64).sqrt();
        let w2 = store.add_uniform("mlp.output.weight", schema.len(), config.mlp_hidden, bound2, &mut rng);
        let b2 = store.add_uniform("mlp.output.bias", schema.len(), 1, bound2, &mut rng);
        Ok(PairClassifier {
            config,
            schema: schema.clone(),
            word_dim,
            store,
            pos,
            fwd,
            bwd,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Model sized for the POS tags found in `pairs`.
    pub fn for_pairs(config: PairClassifierConfig, schema: &LabelSchema, word_dim: usize, pairs: &[CandidatePair]) -> Result<Self> {
        let mut tags: Vec<&str> = pairs.iter().flat_map(|p| p.window.iter().map(|t| t.pos.as_str())).collect();
        tags.sort_unstable();
        tags.dedup();
        PairClassifier::new(config, schema, word_dim, tags)
    }

    pub fn config(&self) -> &PairClassifierConfig {
        &self.config
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn pos_table(&self) -> &PosEmbeddingTable {
        &self.pos
    }

    pub fn encode(&self, pair: &CandidatePair, word: &EmbeddingProvider) -> Result<EncodedPair> {
        if word.dim() != self.word_dim {
            return Err(Error::Config(format!(
                "embedding provider has dim {}, model expects {}",
                word.dim(),
                self.word_dim
            )));
        }
        let n = pair.window.len();
        if pair.src_pos >= n || pair.tgt_pos >= n {
            return Err(Error::Invalid(format!(
                "anchor out of window for {}:{}->{} (positions {}, {} in window of {n})",
                pair.doc_id, pair.source, pair.target, pair.src_pos, pair.tgt_pos
            )));
        }
        Ok(EncodedPair {
            words: word.lookup_window(pair)?,
            tags: pair.window.iter().map(|t| self.pos.row_index(&t.pos)).collect(),
            src_pos: pair.src_pos,
            tgt_pos: pair.tgt_pos,
            x_dist: pair.normalized_distance(),
            gold: pair.label,
        })
    }

    pub fn encode_all(&self, pairs: &[CandidatePair], word: &EmbeddingProvider) -> Result<Vec<EncodedPair>> {
        pairs.par_iter().map(|p| self.encode(p, word)).collect()
    }

    fn load_weights(&self, tape: &mut Tape) -> Weights {
        Weights {
            fwd: LstmWeights::load(tape, &self.store, &self.fwd),
            bwd: LstmWeights::load(tape, &self.store, &self.bwd),
            w1: tape.param(&self.store, self.w1),
            b1: tape.param(&self.store, self.b1),
            w2: tape.param(&self.store, self.w2),
            b2: tape.param(&self.store, self.b2),
        }
    }

    /// Records the forward pass and returns the logits node.
    pub fn logits(&self, tape: &mut Tape, ex: &EncodedPair, mode: Mode, rng: &mut ChaCha8Rng) -> Result<NodeId> {
        let w = self.load_weights(tape);
        let inputs = embed_tokens(tape, &self.store, &ex.words, &ex.tags, &self.pos)?;
        let fs = lstm_sequence(tape, &inputs, &w.fwd, false)?;
        let bs = lstm_sequence(tape, &inputs, &w.bwd, true)?;
        let x = tape.constant(vec![ex.x_dist]);
        let feats = tape.concat(&[fs[ex.src_pos], bs[ex.src_pos], fs[ex.tgt_pos], bs[ex.tgt_pos], x])?;
        let feats = tape.dropout(feats, self.config.dropout, mode, rng)?;
        let hidden = tape.matvec(w.w1, feats)?;
        let hidden = tape.add(hidden, w.b1)?;
        let hidden = tape.tanh(hidden);
        let hidden = tape.dropout(hidden, self.config.dropout, mode, rng)?;
        let out = tape.matvec(w.w2, hidden)?;
        tape.add(out, w.b2)
    }

    /// Label distribution for one pair in eval mode.
    pub fn distribution(&self, ex: &EncodedPair) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.logits(&mut tape, ex, Mode::Eval, &mut rng)?;
        Ok(softmax(tape.value(logits)))
    }

    /// Mean cross-entropy over `batch` and its gradient per parameter (in
    /// store order). Dropout masks in train mode are drawn from streams
    /// derived from `seed` and each example's batch position.
    pub fn batch_loss(&self, batch: &[EncodedPair], mode: Mode, seed: u64) -> Result<(f64, Vec<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let per_example: Vec<(f64, Vec<(ParamId, Vec<f64>)>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut tape = Tape::new();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, i as u64));
                let logits = self.logits(&mut tape, ex, mode, &mut rng)?;
                let (loss, _) = tape.softmax_xent(logits, ex.gold.index())?;
                let root = tape.scale(loss, scale);
                tape.backward(root)?;
                let grads = tape.param_grads().map(|(id, g)| (id, g.to_vec())).collect();
                Ok((tape.scalar(loss), grads))
            })
            .collect::<Result<_>>()?;
        let mut grads: Vec<Vec<f64>> = self.store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        let mut total = 0.0;
        for (loss, g) in per_example {
            total += loss;
            for (id, values) in g {
                for (dst, v) in grads[id.index()].iter_mut().zip(values) {
                    *dst += v;
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// One optimizer update on `batch`; returns the batch loss.
    pub fn train_step(&mut self, batch: &[EncodedPair], adam: &mut Adam, seed: u64) -> Result<f64> {
        let (loss, grads) = self.batch_loss(batch, Mode::Train, seed)?;
        for (id, g) in self.store.ids().zip(grads) {
            self.store.get_mut(id).grad.copy_from_slice(&g);
        }
        adam.step(&mut self.store);
        Ok(loss)
    }

    /// Argmax label and full distribution for each pair.
    pub fn predict_encoded(&self, pairs: &[EncodedPair]) -> Result<Vec<(Label, Vec<f64>)>> {
        pairs
            .par_iter()
            .map(|ex| {
                let probs = self.distribution(ex)?;
                Ok((Label::from_index(argmax(&probs)), probs))
            })
            .collect()
    }

    pub fn predict(&self, pairs: &[CandidatePair], word: &EmbeddingProvider) -> Result<Vec<(Label, Vec<f64>)>> {
        self.predict_encoded(&self.encode_all(pairs, word)?)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = Metadata {
            config: self.config.clone(),
            schema: self.schema.to_text(),
            pos_tags: self.pos.tags().to_vec(),
            word_dim: self.word_dim,
        };
        self.store
            .to_checkpoint(&serde_json::to_string(&meta).expect("metadata serializes"))
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let ckpt = Checkpoint::parse(bytes)?;
        let meta: Metadata = serde_json::from_str(&ckpt.metadata).map_err(|e| Error::Format {
            line: 0,
            message: format!("checkpoint metadata: {e}"),
        })?;
        let schema = LabelSchema::parse(&meta.schema)?;
        let mut model = PairClassifier::new(
            meta.config,
            &schema,
            meta.word_dim,
            meta.pos_tags.iter().map(String::as_str),
        )?;
        model.store.load_checkpoint(bytes)?;
        Ok(model)
    }
}

/// Scores a model on a pair set.
pub fn evaluate(model: &PairClassifier, pairs: &PairSet, word: &EmbeddingProvider, ignore_oow: bool) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    let candidates = eval_pairs(pairs);
    let encoded = model.encode_all(&candidates, word)?;
    evaluate_encoded(model, pairs, &candidates, &encoded, ignore_oow)
}

fn evaluate_encoded(
    model: &PairClassifier,
    pairs: &PairSet,
    candidates: &[CandidatePair],
    encoded: &[EncodedPair],
    ignore_oow: bool,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    let outputs = model.predict_encoded(encoded)?;
    let schema = model.schema();
    let mut preds = Vec::with_capacity(candidates.len());
    let mut records = Vec::with_capacity(candidates.len());
    for (c, (label, probs)) in candidates.iter().zip(outputs) {
        preds.push(Prediction { key: c.key(), label });
        records.push(PredictionRecord {
            doc_id: c.doc_id.clone(),
            source: c.source.clone(),
            target: c.target.clone(),
            gold: schema.name(c.label).to_string(),
            predicted: schema.name(label).to_string(),
            probs: Some(probs),
        });
    }
    Ok((score(&preds, pairs, schema, ignore_oow)?, records))
}

/// Trains on `train` with optional dev-based early stopping.
pub fn train(
    model: &mut PairClassifier,
    train: &[CandidatePair],
    dev: Option<&PairSet>,
    word: &EmbeddingProvider,
) -> Result<TrainHistory> {
    train_with_monitor(model, train, dev, word, |_, _| Control::Continue)
}

/// Like [`train`], calling `monitor` after every epoch with the epoch record
/// and the current model.
///
/// With a dev set, the parameters of the best dev epoch are restored at the
/// end and training stops once `patience` epochs pass without improvement.
/// Without one, the last epoch is kept.
pub fn train_with_monitor<F>(
    model: &mut PairClassifier,
    train: &[CandidatePair],
    dev: Option<&PairSet>,
    word: &EmbeddingProvider,
    mut monitor: F,
) -> Result<TrainHistory>
where
    F: FnMut(&EpochRecord, &PairClassifier) -> Control,
{
    if train.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let cfg = model.config().clone();
    let examples = model.encode_all(train, word)?;
    let dev_data = match dev {
        Some(set) => {
            let candidates = eval_pairs(set);
            let encoded = model.encode_all(&candidates, word)?;
            Some((set, candidates, encoded))
        }
        None => None,
    };

    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let seed = derive_seed(cfg.seed, 2 + epoch as u64, b as u64);
            loss_sum += model.train_step(&batch, &mut adam, seed)? * batch.len() as f64;
        }
        let dev_f1 = match &dev_data {
            Some((set, candidates, encoded)) => Some(evaluate_encoded(model, set, candidates, encoded, false)?.0.f1),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            dev_f1,
        };
        log::debug!("epoch {epoch}: loss {:.6} dev f1 {:?}", record.train_loss, record.dev_f1);
        let control = monitor(&record, model);
        history.epochs.push(record);

        match dev_f1 {
            Some(f1) => {
                if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                    best = Some((f1, model.store.clone()));
                    history.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                }
                if since_best >= cfg.patience {
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
        if control == Control::Stop {
            break;
        }
    }
    if let Some((_, store)) = best {
        model.store.copy_values_from(&store);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::pairgen::build_corpus_pairs;

    fn small_config() -> PairClassifierConfig {
        PairClassifierConfig {
            hidden_size: 6,
            mlp_hidden: 8,
            dropout: 0.0,
            pos_dim: 3,
            lr: 0.01,
            batch_size: 8,
            max_epochs: 3,
            patience: 3,
            seed: 5,
        }
    }

    fn setup() -> (LabelSchema, PairSet, EmbeddingProvider) {
        let schema = LabelSchema::default();
        let docs = generate_synthetic_corpus(6, 3);
        let set = build_corpus_pairs(&docs, &schema);
        (schema, set, EmbeddingProvider::random(5, 1))
    }

    #[test]
    fn argmax_tie_goes_to_first() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn config_validation() {
        let bad = PairClassifierConfig {
            hidden_size: 0,
            dropout: 1.0,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("hidden_size") && msg.contains("dropout")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distribution_is_normalized() {
        let (schema, set, word) = setup();
        let pairs = eval_pairs(&set);
        let model = PairClassifier::for_pairs(small_config(), &schema, 5, &pairs).unwrap();
        for (_, probs) in model.predict(&pairs, &word).unwrap() {
            assert_eq!(probs.len(), schema.len());
            assert!(probs.iter().all(|&p| p >= 0.0));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let (schema, set, word) = setup();
        let cfg = PairClassifierConfig {
            patience: 0,
            max_epochs: 10,
            ..small_config()
        };
        let pairs = eval_pairs(&set);
        let mut model = PairClassifier::for_pairs(cfg, &schema, 5, &pairs).unwrap();
        let h = train(&mut model, &pairs, Some(&set), &word).unwrap();
        assert_eq!(h.epochs.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (schema, set, word) = setup();
        let pairs = eval_pairs(&set);
        let cfg = PairClassifierConfig {
            dropout: 0.3,
            ..small_config()
        };
        let run = || {
            let mut model = PairClassifier::for_pairs(cfg.clone(), &schema, 5, &pairs).unwrap();
            let h = train(&mut model, &pairs, Some(&set), &word).unwrap();
            (h, model.to_checkpoint())
        };
        let (h1, c1) = run();
        let (h2, c2) = run();
        assert_eq!(h1, h2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn empty_training_set() {
        let (schema, _, word) = setup();
        let mut model = PairClassifier::new(small_config(), &schema, 5, ["NN"]).unwrap();
        assert!(train(&mut model, &[], None, &word).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (schema, set, word) = setup();
        let pairs = eval_pairs(&set);
        let mut model = PairClassifier::for_pairs(small_config(), &schema, 5, &pairs).unwrap();
        train(&mut model, &pairs, None, &word).unwrap();
        let restored = PairClassifier::from_checkpoint(&model.to_checkpoint()).unwrap();
        assert_eq!(restored.predict(&pairs, &word).unwrap(), model.predict(&pairs, &word).unwrap());
    }

    #[test]
    fn anchor_outside_window() {
        let (schema, set, word) = setup();
        let mut pair = set.positives[0].clone();
        pair.tgt_pos = pair.window.len();
        let model = PairClassifier::new(small_config(), &schema, 5, ["NN"]).unwrap();
        assert!(matches!(model.encode(&pair, &word), Err(Error::Invalid(_))));
    }
}
