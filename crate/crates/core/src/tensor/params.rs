use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// First-moment estimate.
    pub m: Vec<f64>,
    /// Second-moment estimate.
    pub v: Vec<f64>,
}

impl Parameter {
    fn new(name: &str, rows: usize, cols: usize, value: Vec<f64>) -> Self {
        let n = rows * cols;
        Parameter {
            name: name.to_string(),
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter '{name}' payload does not match shape");
        self.params.push(Parameter::new(name, rows, cols, value));
        ParamId(self.params.len() - 1)
    }

    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, bound: f64, rng: &mut R) -> ParamId {
        let value = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, rows, cols, value)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grads(&mut self, k: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= k);
        }
    }

    /// Copies values (not optimizer state) from another store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.copy_from_slice(&src.value);
        }
    }

    /// Serializes names, shapes and values after a versioned header.
    ///
    /// Layout (little endian): magic `TRELCKPT`, u32 version, u64 metadata
    /// length, metadata bytes, u64 parameter count, then per parameter a u64
    /// name length, name bytes, u64 rows, u64 cols and rows*cols f64 values.
    pub fn to_checkpoint(&self, metadata: &str) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        write_bytes(&mut out, metadata.as_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            write_bytes(&mut out, p.name.as_bytes());
            out.extend_from_slice(&(p.rows as u64).to_le_bytes());
            out.extend_from_slice(&(p.cols as u64).to_le_bytes());
            for v in &p.value {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Loads values from a checkpoint into this store. Every parameter of the
    /// store must be present with an identical shape. Returns the metadata.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<String> {
        let ckpt = Checkpoint::parse(bytes)?;
        if ckpt.params.len() != self.params.len() {
            return Err(Error::Shape {
                op: "load_checkpoint",
                detail: format!(
                    "checkpoint has {} parameters, model has {}",
                    ckpt.params.len(),
                    self.params.len()
                ),
            });
        }
        for p in &mut self.params {
            let (_, rows, cols, values) = ckpt
                .params
                .iter()
                .find(|(name, ..)| *name == p.name)
                .ok_or_else(|| Error::Format {
                    line: 0,
                    message: format!("checkpoint lacks parameter '{}'", p.name),
                })?;
            if (*rows, *cols) != (p.rows, p.cols) {
                return Err(Error::Shape {
                    op: "load_checkpoint",
                    detail: format!(
                        "parameter '{}' is {}x{} in checkpoint, {}x{} in model",
                        p.name, rows, cols, p.rows, p.cols
                    ),
                });
            }
            p.value.copy_from_slice(values);
        }
        Ok(ckpt.metadata)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TRELCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Decoded checkpoint contents.
#[derive(Debug)]
pub struct Checkpoint {
    pub metadata: String,
    pub params: Vec<(String, usize, usize, Vec<f64>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                line: 0,
                message: format!("checkpoint truncated at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format {
            line: 0,
            message: format!("checkpoint string is not UTF-8: {e}"),
        })
    }
}

impl Checkpoint {
    pub fn parse(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                line: 0,
                message: "not a checkpoint (bad magic)".into(),
            });
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                line: 0,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let metadata = r.string()?;
        let count = r.u64()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let raw = r.take(rows * cols * 8)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push((name, rows, cols, values));
        }
        Ok(Checkpoint { metadata, params })
    }
}

/// Bias-corrected adaptive-moment optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam::with_betas(lr, (0.9, 0.999), 1e-8)
    }

    pub fn with_betas(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in &mut store.params {
            for k in 0..p.value.len() {
                let g = p.grad[k];
                p.m[k] = self.beta1 * p.m[k] + (1.0 - self.beta1) * g;
                p.v[k] = self.beta2 * p.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = p.m[k] / c1;
                let v_hat = p.v[k] / c2;
                p.value[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                p.grad[k] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut store = ParamStore::new();
        let id = store.add("w", 1, 2, vec![0.3, -0.7]);
        let mut adam = Adam::new(0.1);
        adam.step(&mut store);
        assert_eq!(store.get(id).value, vec![0.3, -0.7]);
    }

    #[test]
    fn one_step_descends_on_square() {
        let mut store = ParamStore::new();
        let id = store.add("w", 1, 1, vec![1.0]);
        let mut adam = Adam::new(0.0005);
        store.get_mut(id).grad[0] = 2.0 * 1.0;
        adam.step(&mut store);
        let w = store.get(id).value[0];
        assert!(w < 1.0);
        assert!((w - (1.0 - 0.0005)).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(x, y) = (x - 3)^2 + 10 (y + 1)^2, minimizer (3, -1)
        let mut store = ParamStore::new();
        let id = store.add("w", 2, 1, vec![0.0, 0.0]);
        let mut adam = Adam::new(0.05);
        for _ in 0..500 {
            let w = store.get(id).value.clone();
            store.get_mut(id).grad = vec![2.0 * (w[0] - 3.0), 20.0 * (w[1] + 1.0)];
            adam.step(&mut store);
        }
        let w = &store.get(id).value;
        assert!((w[0] - 3.0).abs() < 1e-3 && (w[1] + 1.0).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = ParamStore::new();
        a.add_uniform("w", 3, 2, 0.5, &mut rng);
        a.add_uniform("b", 3, 1, 0.5, &mut rng);
        let bytes = a.to_checkpoint("{\"k\":1}");

        let mut b = ParamStore::new();
        b.add_zeros("w", 3, 2);
        b.add_zeros("b", 3, 1);
        assert_eq!(b.load_checkpoint(&bytes).unwrap(), "{\"k\":1}");
        assert_eq!(a.get(ParamId(0)).value, b.get(ParamId(0)).value);

        let mut c = ParamStore::new();
        c.add_zeros("w", 2, 3);
        c.add_zeros("b", 3, 1);
        assert!(matches!(c.load_checkpoint(&bytes), Err(Error::Shape { .. })));
        assert!(b.load_checkpoint(&bytes[..20]).is_err());
        assert!(b.load_checkpoint(b"garbage!garbage!").is_err());
    }
}
