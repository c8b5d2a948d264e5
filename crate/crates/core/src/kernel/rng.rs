use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A named random substream. The generator state is a pure function of the
/// master seed and the name, so draws in one stream never perturb another.
#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn derive(master_seed: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(master_seed.to_le_bytes());
        h.update(name.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        RngStream {
            name: name.to_owned(),
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Lazily created substreams keyed by name.
#[derive(Debug, Clone)]
pub struct RngStreams {
    master_seed: u64,
    streams: BTreeMap<String, RngStream>,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams {
            master_seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Returns the stream for `name`, continuing where the last call left off.
    pub fn rng(&mut self, name: &str) -> &mut RngStream {
        let seed = self.master_seed;
        self.streams
            .entry(name.to_owned())
            .or_insert_with(|| RngStream::derive(seed, name))
    }
}
