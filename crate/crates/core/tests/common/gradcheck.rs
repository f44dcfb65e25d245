//! Central finite differences against tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use temprel::tensor::{NodeId, ParamId, ParamStore, Tape};

pub const EPS: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Random values in ±1, nudged at least `margin` away from zero.
pub fn random_values(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v.abs() < margin {
                v.signum() * margin + v
            } else {
                v
            }
        })
        .collect()
}

/// Builds a scalar on `tape` from the store's parameters.
pub trait Scalar: Fn(&mut Tape, &ParamStore, &[ParamId]) -> NodeId {}
impl<F: Fn(&mut Tape, &ParamStore, &[ParamId]) -> NodeId> Scalar for F {}

fn eval(store: &ParamStore, ids: &[ParamId], f: &impl Scalar) -> f64 {
    let mut tape = Tape::new();
    let out = f(&mut tape, store, ids);
    tape.scalar(out)
}

/// Max relative error over every parameter entry.
pub fn check(store: &mut ParamStore, ids: &[ParamId], f: impl Scalar) -> f64 {
    let mut tape = Tape::new();
    let out = f(&mut tape, store, ids);
    tape.backward(out).unwrap();
    let analytic: Vec<(ParamId, Vec<f64>)> = tape.param_grads().map(|(id, g)| (id, g.to_vec())).collect();
    let mut worst = 0.0f64;
    for &id in ids {
        let grad = analytic
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| vec![0.0; store.get(id).value.len()]);
        for k in 0..grad.len() {
            let orig = store.get(id).value[k];
            store.get_mut(id).value[k] = orig + EPS;
            let up = eval(store, ids, &f);
            store.get_mut(id).value[k] = orig - EPS;
            let down = eval(store, ids, &f);
            store.get_mut(id).value[k] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(grad[k], numeric));
        }
    }
    worst
}

/// Reduces a vector node to a scalar through a fixed random projection.
pub fn project(tape: &mut Tape, x: NodeId, seed: u64) -> NodeId {
    let n = tape.shape(x).0 * tape.shape(x).1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = tape.constant_matrix(w, 1, n);
    tape.matvec(w, x).unwrap()
}

use temprel::corpus::{Label, LabelSchema};
use temprel::model::{EncodedPair, PairClassifier, PairClassifierConfig};
use temprel::tensor::{lstm_step, LstmWeights, Mode};

fn store_with(rng: &mut ChaCha8Rng, shapes: &[(usize, usize)], margin: f64) -> (ParamStore, Vec<ParamId>) {
    let mut store = ParamStore::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| store.add(&format!("p{k}"), r, c, random_values(rng, r * c, margin)))
        .collect();
    (store, ids)
}

/// Worst relative error of each tape op for one seed.
pub fn op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let n = 5;

    macro_rules! case {
        ($name:expr, $shapes:expr, $margin:expr, |$t:ident, $p:ident| $body:expr) => {{
            let (mut store, ids) = store_with(&mut rng, &$shapes, $margin);
            let err = check(&mut store, &ids, |$t: &mut Tape, s: &ParamStore, ids: &[ParamId]| {
                let $p: Vec<NodeId> = ids.iter().map(|&id| $t.param(s, id)).collect();
                let y = $body;
                project($t, y, seed)
            });
            out.push(($name, err));
        }};
    }

    case!("matvec", [(4, n), (n, 1)], 0.0, |t, p| t.matvec(p[0], p[1]).unwrap());
    case!("add", [(n, 1), (n, 1)], 0.0, |t, p| t.add(p[0], p[1]).unwrap());
    case!("mul", [(n, 1), (n, 1)], 0.0, |t, p| t.mul(p[0], p[1]).unwrap());
    case!("scale", [(n, 1)], 0.0, |t, p| t.scale(p[0], -1.7));
    case!("concat", [(n, 1), (2, 1), (3, 1)], 0.0, |t, p| t.concat(&p).unwrap());
    case!("slice", [(n, 1)], 0.0, |t, p| t.slice(p[0], 1, 3).unwrap());
    case!("row", [(3, n)], 0.0, |t, p| t.row(p[0], 2).unwrap());
    case!("sigmoid", [(n, 1)], 0.0, |t, p| t.sigmoid(p[0]));
    case!("tanh", [(n, 1)], 0.0, |t, p| t.tanh(p[0]));
    case!("relu", [(n, 1)], 0.1, |t, p| t.relu(p[0]));
    case!("dropout", [(n * 4, 1)], 0.0, |t, p| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        t.dropout(p[0], 0.5, Mode::Train, &mut r).unwrap()
    });
    case!("sum", [(1, 1), (1, 1), (1, 1)], 0.0, |t, p| t.sum(&p).unwrap());
    case!("mean", [(1, 1), (1, 1), (1, 1)], 0.0, |t, p| t.mean(&p).unwrap());
    case!("softmax_xent", [(n, 1)], 0.0, |t, p| t.softmax_xent(p[0], (seed as usize) % n).unwrap().0);
    case!("lstm_step", [(3, 1), (2, 1), (2, 1), (8, 5), (8, 1)], 0.0, |t, p| {
        let w = LstmWeights {
            weight: p[3],
            bias: p[4],
            hidden: 2,
        };
        let (h, c) = lstm_step(t, p[0], p[1], p[2], &w).unwrap();
        t.concat(&[h, c]).unwrap()
    });
    out
}

/// A small classifier and a batch of random encoded pairs.
pub fn tiny_model(seed: u64) -> (PairClassifier, Vec<EncodedPair>) {
    let schema = LabelSchema::default();
    let config = PairClassifierConfig {
        hidden_size: 3,
        mlp_hidden: 4,
        pos_dim: 2,
        dropout: 0.3,
        seed,
        ..PairClassifierConfig::default()
    };
    let word_dim = 3;
    let model = PairClassifier::new(config, &schema, word_dim, ["NN", "VBD", "IN"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(99));
    let batch = (0..3)
        .map(|_| {
            let len = rng.gen_range(2..6);
            let src = rng.gen_range(0..len - 1);
            let tgt = rng.gen_range(src + 1..len);
            EncodedPair {
                words: (0..len).map(|_| random_values(&mut rng, word_dim, 0.0)).collect(),
                tags: (0..len).map(|_| rng.gen_range(0..model.pos_table().tags().len())).collect(),
                src_pos: src,
                tgt_pos: tgt,
                x_dist: (tgt - src) as f64 / len as f64,
                gold: Label::from_index(rng.gen_range(0..schema.len())),
            }
        })
        .collect();
    (model, batch)
}

/// Worst relative error of the full classifier loss in train mode.
pub fn model_error(seed: u64) -> f64 {
    let (mut model, batch) = tiny_model(seed);
    let (_, grads) = model.batch_loss(&batch, Mode::Train, seed).unwrap();
    let ids: Vec<ParamId> = model.store().ids().collect();
    let mut worst = 0.0f64;
    for (id, g) in ids.into_iter().zip(grads) {
        for (k, &analytic) in g.iter().enumerate() {
            let orig = model.store().get(id).value[k];
            model.store_mut().get_mut(id).value[k] = orig + EPS;
            let up = model.batch_loss(&batch, Mode::Train, seed).unwrap().0;
            model.store_mut().get_mut(id).value[k] = orig - EPS;
            let down = model.batch_loss(&batch, Mode::Train, seed).unwrap().0;
            model.store_mut().get_mut(id).value[k] = orig;
            worst = worst.max(rel_err(analytic, (up - down) / (2.0 * EPS)));
        }
    }
    worst
}
