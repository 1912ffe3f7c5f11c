//! Seeded inputs shared by the benchmarks.

use evtpr_core::event_model::Polarity;
use evtpr_core::{Event, EventStream, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// DAVIS346 resolution.
pub const SENSOR: (u16, u16) = (346, 260);

/// `n` uniformly placed events over one second.
pub fn random_stream(n: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = SENSOR;
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(rng.gen_range(0..w), rng.gen_range(0..h), rng.gen_range(0..=1_000_000), p)
        })
        .collect();
    events.sort_by(Event::canonical_cmp);
    EventStream::new(events, w, h, 0, 1_000_000).expect("generated events are in range")
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .expect("shape matches data")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
