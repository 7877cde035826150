use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived RNG stream is for. Each purpose gets a disjoint stream
/// space so, e.g., channel draws can never collide with data generation
/// no matter how agent ids and iteration counters line up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Per-iteration channel gain draws.
    Channel = 1,
    /// Per-agent training data.
    DatagenAgent = 2,
    /// The shared test set.
    DatagenTest = 3,
    /// Per-agent feature shift directions.
    DatagenShift = 4,
    /// Monte-Carlo estimation of expected normalized channel gains.
    ExpectedGain = 5,
}

/// Packs (purpose, agent, iteration) into a single ChaCha stream id.
///
/// Layout: purpose in the top byte, agent id in the next two bytes,
/// iteration in the low 40 bits. Iteration counts beyond 2^40 or agent
/// ids beyond 2^16 are out of scope for this simulator and rejected
/// loudly instead of wrapping.
fn stream_id(purpose: StreamPurpose, agent: usize, iteration: usize) -> u64 {
    assert!(agent < (1 << 16), "agent id {agent} exceeds stream packing");
    assert!(
        iteration < (1u64 << 40) as usize,
        "iteration {iteration} exceeds stream packing"
    );
    ((purpose as u64) << 56) | ((agent as u64) << 40) | iteration as u64
}

/// Deterministic RNG for one (seed, purpose, agent, iteration) cell.
///
/// Every random quantity in the library is drawn from a stream derived
/// this way, which is what makes whole runs reproducible bit for bit:
/// the master seed fixes the generator, the stream id isolates the cell.
pub fn derive_rng(
    master_seed: u64,
    purpose: StreamPurpose,
    agent: usize,
    iteration: usize,
) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(purpose, agent, iteration));
    rng
}
