//! Reproducible random substreams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream keyed by the master
//! seed. The 64-bit stream id encodes the purpose, the Monte-Carlo block and a
//! sub-index, so draws for one block never depend on how other blocks were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Channel,
    Csi,
    Data,
    Noise,
    Pilots,
    Schedule,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Channel => 1,
            Purpose::Csi => 2,
            Purpose::Data => 3,
            Purpose::Noise => 4,
            Purpose::Pilots => 5,
            Purpose::Schedule => 6,
        }
    }
}

const BLOCK_BITS: u32 = 32;
const INDEX_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Substreams {
    master: u64,
}

impl Substreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master: master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    /// Generator for `(purpose, block, index)`.
    ///
    /// Panics if `block >= 2^32` or `index >= 2^24`.
    pub fn rng(&self, purpose: Purpose, block: u64, index: u64) -> ChaCha8Rng {
        assert!(block < (1 << BLOCK_BITS), "block index out of range");
        assert!(index < (1 << INDEX_BITS), "sub-index out of range");
        let stream = (purpose.tag() << (BLOCK_BITS + INDEX_BITS)) | (block << INDEX_BITS) | index;
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream);
        rng
    }
}
