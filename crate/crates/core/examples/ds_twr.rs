//! Double-sided two-way ranging between two drifting clocks, compared with
//! the naive single-sided estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensegrity_state::ranging::{
    single_sided_tof, tof_estimate, twr_exchange, ClockModel, TwrDelays, TwrExchange, SPEED_OF_LIGHT,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("{:>8} {:>10} {:>12} {:>12}", "d (m)", "skew (ppm)", "ds err (mm)", "ss err (mm)");
    for _ in 0..8 {
        let skew = rng.random_range(-50.0..50.0);
        let initiator = ClockModel { offset: rng.random(), skew: 0.0, quantum: ClockModel::DEFAULT_QUANTUM };
        let responder = ClockModel { offset: rng.random(), skew: skew * 1e-6, quantum: ClockModel::DEFAULT_QUANTUM };
        let ex = TwrExchange {
            initiator: 0,
            responder: 1,
            start: 1.0,
            distance: rng.random_range(1.0..30.0),
            bias: 0.0,
            delays: TwrDelays::default(),
        };
        let ts = twr_exchange(&ex, &initiator, &responder);
        let ds = SPEED_OF_LIGHT * tof_estimate(&ts).unwrap() - ex.distance;
        let ss = SPEED_OF_LIGHT * single_sided_tof(&ts).unwrap() - ex.distance;
        println!("{:>8.3} {:>10.1} {:>12.3} {:>12.1}", ex.distance, skew, ds * 1e3, ss * 1e3);
    }
}
