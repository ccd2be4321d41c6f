use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::{nlos_gate, NlosModel};
use super::twr::{distance_estimate, Channel, ExchangeEvents};
use super::{ClockModel, ModuleId, OffsetTable, RangingError, RangingMeasurement, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleRole {
    /// Fixed base station; its own measurements are not reported.
    Anchor,
    /// Mounted on the robot; reports every distance it computes.
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Module {
    pub id: ModuleId,
    pub clock: ClockModel,
    pub role: ModuleRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    /// s
    pub slot_spacing: f64,
    pub channel: Channel,
    pub nlos: NlosModel,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self { slot_spacing: 1e-3, channel: Channel::IDEAL, nlos: NlosModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastRound {
    pub start: f64,
    /// s
    pub duration: f64,
    pub packets: usize,
    /// Every distance reported this round, rejected ones included.
    pub measurements: Vec<RangingMeasurement>,
}

/// Packets emitted in one round by `n` modules.
pub fn packets_per_round(n: usize) -> usize {
    3 * n
}

/// Runs one broadcast round starting at true time `start`.
///
/// Modules are slotted by ascending id: the k-th module polls at `k s`,
/// responds at `(n + k) s` and sends its final at `(2n + k) s`. Every
/// module that hears a poll, its own response and the matching final can
/// form a double-sided estimate, so each robot module reports one distance
/// per other module. `positions(t)` returns the true antenna positions of
/// all modules (in `modules` order) at time `t`. `true_offsets` biases the
/// flight times; `corrections` are subtracted from the reported distances.
pub fn broadcast_round<R: Rng>(
    modules: &[Module],
    start: f64,
    mut positions: impl FnMut(f64) -> Vec<Vector3<f64>>,
    true_offsets: &OffsetTable,
    corrections: &OffsetTable,
    config: &RoundConfig,
    rng: &mut R,
) -> Result<BroadcastRound, RangingError> {
    if !(config.slot_spacing > 0.0) {
        return Err(RangingError::InvalidParameter("slot_spacing"));
    }
    let mut seen = BTreeSet::new();
    for m in modules {
        if !seen.insert(m.id) {
            return Err(RangingError::SlotCollision(m.id));
        }
    }
    let n = modules.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| modules[k].id);
    let mut slot = vec![0usize; n];
    for (rank, &k) in order.iter().enumerate() {
        slot[k] = rank;
    }

    let s = config.slot_spacing;
    let poll_t = |k: usize| start + slot[k] as f64 * s;
    let resp_t = |k: usize| start + (n + slot[k]) as f64 * s;
    let final_t = |k: usize| start + (2 * n + slot[k]) as f64 * s;
    let snapshot = |t: f64, p: &mut dyn FnMut(f64) -> Vec<Vector3<f64>>| {
        let v = p(t);
        assert_eq!(v.len(), n, "positions callback returned wrong module count");
        v
    };
    let polls: Vec<Vec<Vector3<f64>>> = (0..n).map(|k| snapshot(poll_t(k), &mut positions)).collect();
    let resps: Vec<Vec<Vector3<f64>>> = (0..n).map(|k| snapshot(resp_t(k), &mut positions)).collect();
    let finals: Vec<Vec<Vector3<f64>>> = (0..n).map(|k| snapshot(final_t(k), &mut positions)).collect();

    let mut measurements = Vec::new();
    for &j in &order {
        if modules[j].role != ModuleRole::Robot {
            continue;
        }
        for &i in &order {
            if i == j {
                continue;
            }
            let (mi, mj) = (&modules[i], &modules[j]);
            if config.channel.loss_probability > 0.0
                && rng.random::<f64>() < config.channel.loss_probability
            {
                continue;
            }
            let path = config.nlos.sample(rng);
            let bias = (true_offsets.get_or_zero(mi.id, mj.id) + path.bias) / SPEED_OF_LIGHT;
            let ev = ExchangeEvents {
                poll: poll_t(i),
                response: resp_t(j),
                fin: final_t(i),
                flight_poll: (polls[i][i] - polls[i][j]).norm() / SPEED_OF_LIGHT + bias,
                flight_response: (resps[j][j] - resps[j][i]).norm() / SPEED_OF_LIGHT + bias,
                flight_final: (finals[i][i] - finals[i][j]).norm() / SPEED_OF_LIGHT + bias,
            };
            let ts = ev.stamp((mi.id, &mi.clock), (mj.id, &mj.clock), start, config.channel.noise_fn(rng));
            let mut m = distance_estimate(&ts, corrections)?;
            m.signal_power = path.signal_power;
            m.accepted = nlos_gate(&m, &config.nlos).is_accepted();
            measurements.push(m);
        }
    }

    Ok(BroadcastRound {
        start,
        duration: packets_per_round(n) as f64 * s,
        packets: packets_per_round(n),
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranging::{twr_exchange, TwrDelays, TwrExchange};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn module(id: ModuleId, role: ModuleRole) -> Module {
        Module { id, clock: ClockModel::IDEAL, role }
    }

    fn fixed(points: Vec<Vector3<f64>>) -> impl FnMut(f64) -> Vec<Vector3<f64>> {
        move |_| points.clone()
    }

    fn line(n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|k| Vector3::new(k as f64, 0.5 * k as f64, 1.0)).collect()
    }

    fn run(modules: &[Module], pts: Vec<Vector3<f64>>) -> BroadcastRound {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        broadcast_round(
            modules,
            0.0,
            fixed(pts),
            &OffsetTable::default(),
            &OffsetTable::default(),
            &RoundConfig::default(),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn four_modules_twelve_packets() {
        let mods: Vec<Module> = (0..4).map(|k| module(k, ModuleRole::Robot)).collect();
        assert_eq!(run(&mods, line(4)).packets, 12);
    }

    #[test]
    fn twenty_modules_fit_sixty_ms() {
        let mods: Vec<Module> = (0..20).map(|k| module(k, ModuleRole::Robot)).collect();
        let round = run(&mods, line(20));
        assert!(round.duration <= 0.060 + 1e-12, "{}", round.duration);
    }

    #[test]
    fn anchors_report_nothing() {
        let mut mods: Vec<Module> = (0..3).map(|k| module(k, ModuleRole::Anchor)).collect();
        mods.extend((3..5).map(|k| module(k, ModuleRole::Robot)));
        let round = run(&mods, line(5));
        // each of 2 robots hears 3 anchors and the other robot
        assert_eq!(round.measurements.len(), 8);
        assert!(round.measurements.iter().all(|m| m.responder >= 3));
        let robot_pair = round.measurements.iter().filter(|m| m.initiator >= 3).count();
        assert_eq!(robot_pair, 2);
    }

    #[test]
    fn two_modules_match_pairwise_exchanges() {
        let ci = ClockModel { offset: 1.0, skew: 12e-6, quantum: 0.0 };
        let cj = ClockModel { offset: -3.0, skew: -7e-6, quantum: 0.0 };
        let mods = [
            Module { id: 0, clock: ci, role: ModuleRole::Robot },
            Module { id: 1, clock: cj, role: ModuleRole::Robot },
        ];
        let pts = vec![Vector3::zeros(), Vector3::new(3.0, 4.0, 0.0)];
        let round = run(&mods, pts);
        assert_eq!(round.measurements.len(), 2);

        let s = 1e-3;
        let tof = 5.0 / SPEED_OF_LIGHT;
        for m in &round.measurements {
            let (a, b) = if m.initiator == 0 { (ci, cj) } else { (cj, ci) };
            let (si, sj) = (m.initiator as f64, m.responder as f64);
            let ex = TwrExchange {
                initiator: m.initiator,
                responder: m.responder,
                start: si * s,
                distance: 5.0,
                bias: 0.0,
                delays: TwrDelays {
                    reply: (2.0 + sj) * s - si * s - tof,
                    final_delay: (4.0 + si) * s - (2.0 + sj) * s - tof,
                },
            };
            let ts = twr_exchange(&ex, &a, &b);
            let oracle = distance_estimate(&ts, &OffsetTable::default()).unwrap();
            assert_relative_eq!(m.raw, oracle.raw, epsilon = 1e-9);
            // residual (1 + skew_j) scale on the flight time
            let skew = if m.responder == 0 { ci.skew } else { cj.skew };
            assert_relative_eq!(m.raw, 5.0 * (1.0 + skew), epsilon = 1e-6);
        }
    }

    #[test]
    fn duplicate_ids_collide() {
        let mods = [module(2, ModuleRole::Robot), module(2, ModuleRole::Anchor)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = broadcast_round(
            &mods,
            0.0,
            fixed(line(2)),
            &OffsetTable::default(),
            &OffsetTable::default(),
            &RoundConfig::default(),
            &mut rng,
        );
        assert_eq!(r.unwrap_err(), RangingError::SlotCollision(2));
    }

    #[test]
    fn offsets_bias_raw_and_corrections_remove_it() {
        let mods = [module(0, ModuleRole::Anchor), module(1, ModuleRole::Robot)];
        let mut truth = OffsetTable::default();
        truth.set(0, 1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = vec![Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0)];
        let round = broadcast_round(&mods, 4.0, fixed(pts), &truth, &truth, &RoundConfig::default(), &mut rng)
            .unwrap();
        let m = &round.measurements[0];
        assert_relative_eq!(m.raw, 2.3, epsilon = 1e-6);
        assert_relative_eq!(m.corrected, 2.0, epsilon = 1e-6);
        assert_eq!(m.time, 4.0);
        assert!(m.accepted);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn packets_scale_linearly(n in 2usize..=25) {
                let mods: Vec<Module> = (0..n as u32).map(|k| module(k, ModuleRole::Robot)).collect();
                let round = run(&mods, line(n));
                prop_assert_eq!(round.packets, 3 * n);
                prop_assert_eq!(round.measurements.len(), n * (n - 1));
            }
        }
    }
}
