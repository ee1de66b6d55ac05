use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Lane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub t: f64,
    pub lane: Lane,
    pub v0: f64,
}

fn lane_stream(rate: f64, horizon: f64, v0: (f64, f64), seed: u64, lane: Lane) -> Vec<Arrival> {
    if !(rate > 0.0) {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane as u64);
    let gap = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= horizon {
            break;
        }
        let v = if v0.1 > v0.0 { rng.random_range(v0.0..=v0.1) } else { v0.0 };
        out.push(Arrival { t, lane, v0: v });
    }
    out
}

/// Independent Poisson arrival streams per lane on `[0, horizon)`, each
/// with a uniform entry speed, merged in time order.
pub fn spawn_arrivals(rate_main: f64, rate_merge: f64, horizon: f64, v0: (f64, f64), seed: u64) -> Vec<Arrival> {
    let mut all = lane_stream(rate_main, horizon, v0, seed, Lane::Main);
    all.extend(lane_stream(rate_merge, horizon, v0, seed, Lane::Merge));
    all.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.lane.cmp(&b.lane)));
    all
}

/// SHA-256 over the exact bit patterns of an arrival list, hex encoded.
pub fn arrivals_digest(arrivals: &[Arrival]) -> String {
    let mut h = Sha256::new();
    for a in arrivals {
        h.update(a.t.to_bits().to_le_bytes());
        h.update([a.lane as u8]);
        h.update(a.v0.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
