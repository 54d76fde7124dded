//! Benchmark fixtures.

use bermuda_core::rng::{make_stream, NormalStream};
use bermuda_core::{BermudanSpec, MarketParams, PayoffKind, Phase, StreamKey};

/// Three-asset max-call on the default market.
pub fn max_call(s0: f64) -> (MarketParams, BermudanSpec) {
    (
        MarketParams::symmetric(3, s0, 0.05, 0.2, 0.1).expect("valid market"),
        BermudanSpec::new(100.0, 3.0, 9, PayoffKind::MaxCall).expect("valid contract"),
    )
}

pub fn stream(task: u64) -> NormalStream {
    make_stream(StreamKey::new(17, Phase::Pricing, task, 0))
}
