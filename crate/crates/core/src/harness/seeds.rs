use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Geometry = 1,
    Fading = 2,
    Codebook = 3,
    Pn = 4,
    Noise = 5,
    Ergodic = 6,
}

/// ChaCha8 keyed by the master seed, on stream `(trial << 8) | purpose`.
/// The same (seed, trial, purpose) always yields the same sequence,
/// whatever else runs.
pub fn stream(master: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    debug_assert!(trial < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}
