//! Named parameter tensors with gradient slots, Adam state, and checkpoint I/O.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rngstream;

const CHECKPOINT_MAGIC: &[u8; 4] = b"SSFW";
const CHECKPOINT_VERSION: u16 = 1;

/// Adam hyperparameters; defaults match the usual (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    value: Tensor,
    grad: Tensor,
    adam_m: Tensor,
    adam_v: Tensor,
}

/// All trainable parameters, keyed by name. Iteration order is the sorted
/// name order, which keeps updates and serialization deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let (r, c) = (value.rows(), value.cols());
        self.slots.insert(
            name.to_string(),
            Slot {
                value,
                grad: Tensor::zeros(r, c),
                adam_m: Tensor::zeros(r, c),
                adam_v: Tensor::zeros(r, c),
            },
        );
    }

    /// Insert a parameter initialized uniformly in +-sqrt(6/(fan_in+fan_out)),
    /// seeded by (seed, name) so the result is independent of insertion order.
    pub fn insert_xavier(&mut self, name: &str, rows: usize, cols: usize, seed: u64) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = rngstream::stream(seed, &format!("init.{name}"));
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(rows, cols, data));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad.data_mut().fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if (slot.grad.rows(), slot.grad.cols()) != (delta.rows(), delta.cols()) {
            return Err(Error::Dimension(format!(
                "gradient shape {}x{} does not match parameter {name} ({}x{})",
                delta.rows(),
                delta.cols(),
                slot.grad.rows(),
                slot.grad.cols()
            )));
        }
        for (g, d) in slot.grad.data_mut().iter_mut().zip(delta.data()) {
            *g += d;
        }
        Ok(())
    }

    /// One Adam update over all parameters. Gradients are left untouched;
    /// the caller zeroes them.
    pub fn adam_step(&mut self, lr: f64, cfg: AdamConfig) -> Result<()> {
        assert!(lr > 0.0, "learning rate must be positive");
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (name, slot) in self.slots.iter_mut() {
            if !slot.grad.all_finite() {
                return Err(Error::Train(format!("non-finite gradient for parameter {name}")));
            }
            for i in 0..slot.value.len() {
                let g = slot.grad.data()[i];
                let m = cfg.beta1 * slot.adam_m.data()[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * slot.adam_v.data()[i] + (1.0 - cfg.beta2) * g * g;
                slot.adam_m.data_mut()[i] = m;
                slot.adam_v.data_mut()[i] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                slot.value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Serialize parameter values (not optimizer state) to the binary
    /// checkpoint format: magic "SSFW", version u16, then per parameter
    /// name length u16 + UTF-8 name, rank u8, dims u32 LE, payload f64 LE.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for (name, slot) in &self.slots {
            let nb = name.as_bytes();
            buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            buf.extend_from_slice(nb);
            buf.push(2u8); // rank: stored as rows x cols
            buf.extend_from_slice(&(slot.value.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(slot.value.cols() as u32).to_le_bytes());
            for v in slot.value.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamStore> {
        let mut file = std::fs::File::open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        let magic = cur.bytes(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
        }
        let version = u16::from_le_bytes(cur.bytes(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut store = ParamStore::new();
        while cur.pos < buf.len() {
            let nlen = u16::from_le_bytes(cur.bytes(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(cur.bytes(nlen)?.to_vec())
                .map_err(|_| Error::Format("non-UTF8 parameter name".into()))?;
            let rank = cur.bytes(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(cur.bytes(4)?.try_into().unwrap()) as usize);
            }
            let (rows, cols) = match dims.as_slice() {
                [r, c] => (*r, *c),
                [n] => (1, *n),
                _ => return Err(Error::Format(format!("parameter {name}: unsupported rank {rank}"))),
            };
            let count = rows * cols;
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(cur.bytes(8)?.try_into().unwrap()));
            }
            store.insert(&name, Tensor::new(rows, cols, data));
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
