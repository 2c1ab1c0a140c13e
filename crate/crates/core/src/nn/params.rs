use rand::Rng;
use sha2::{Digest, Sha256};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Buffers such as BN running statistics are stored but not trained.
    pub trainable: bool,
}

/// Ordered, named parameter storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, tensor, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.numel()).sum()
    }

    /// SHA-256 over names, shapes and exact value bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.name.as_bytes());
            for d in &e.tensor.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &e.tensor.data {
                h.update(v.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Uniform init with variance `gain^2 / fan_in`.
pub fn uniform_init<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
    let bound = (3.0 * gain * gain / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_variance_matches_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = uniform_init(&mut rng, &[200, 100], 50, 2f64.sqrt());
        let var = t.data.iter().map(|v| v * v).sum::<f64>() / t.numel() as f64;
        assert!((var - 2.0 / 50.0).abs() < 0.002, "{var}");
    }

    #[test]
    fn digest_sees_single_bit() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::filled(&[2], 1.0), true);
        let d0 = s.digest();
        s.get_mut(id).data[1] = f64::from_bits(1.0f64.to_bits() + 1);
        assert_ne!(d0, s.digest());
    }
}
