use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClockModel, ModuleId, OffsetTable, RangingError, RangingMeasurement, SPEED_OF_LIGHT};

/// Turnaround delays of the exchange, in true time (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwrDelays {
    /// Poll reception to response emission at the responder.
    pub reply: f64,
    /// Response reception to final emission at the initiator.
    pub final_delay: f64,
}

impl Default for TwrDelays {
    fn default() -> Self {
        Self { reply: 1e-3, final_delay: 1e-3 }
    }
}

/// A single poll/response/final exchange between two modules at a fixed
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwrExchange {
    pub initiator: ModuleId,
    pub responder: ModuleId,
    /// True emission time of the poll (s).
    pub start: f64,
    /// True distance (m).
    pub distance: f64,
    /// Pair-specific bias on every flight time, `delta_{j,i}` (s).
    pub bias: f64,
    pub delays: TwrDelays,
}

/// The six timestamps of one exchange, each in the clock of the module that
/// took it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampSet {
    pub initiator: ModuleId,
    pub responder: ModuleId,
    /// Poll sent (initiator clock).
    pub t_sp: f64,
    /// Poll received (responder clock).
    pub t_rp: f64,
    /// Response sent (responder clock).
    pub t_sr: f64,
    /// Response received (initiator clock).
    pub t_rr: f64,
    /// Final sent (initiator clock).
    pub t_sf: f64,
    /// Final received (responder clock).
    pub t_rf: f64,
    /// True time the measurement is attributed to (s).
    pub wall_time: f64,
}

/// True event times of an exchange plus per-packet flight times.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExchangeEvents {
    pub poll: f64,
    pub response: f64,
    pub fin: f64,
    pub flight_poll: f64,
    pub flight_response: f64,
    pub flight_final: f64,
}

impl ExchangeEvents {
    /// Reads every event with the owning module's clock, adding `noise()` to
    /// each reading before quantization.
    pub(crate) fn stamp(
        &self,
        initiator: (ModuleId, &ClockModel),
        responder: (ModuleId, &ClockModel),
        wall_time: f64,
        mut noise: impl FnMut() -> f64,
    ) -> TimestampSet {
        let (ci, cj) = (initiator.1, responder.1);
        let mut read = |clock: &ClockModel, t: f64| clock.quantize(clock.read_exact(t) + noise());
        TimestampSet {
            initiator: initiator.0,
            responder: responder.0,
            t_sp: read(ci, self.poll),
            t_rp: read(cj, self.poll + self.flight_poll),
            t_sr: read(cj, self.response),
            t_rr: read(ci, self.response + self.flight_response),
            t_sf: read(ci, self.fin),
            t_rf: read(cj, self.fin + self.flight_final),
            wall_time,
        }
    }
}

fn events(ex: &TwrExchange) -> ExchangeEvents {
    let tof = ex.distance / SPEED_OF_LIGHT + ex.bias;
    let response = ex.start + tof + ex.delays.reply;
    let fin = response + tof + ex.delays.final_delay;
    ExchangeEvents {
        poll: ex.start,
        response,
        fin,
        flight_poll: tof,
        flight_response: tof,
        flight_final: tof,
    }
}

/// Noise-free timestamps of `ex` as seen by the initiator's and responder's
/// clocks.
pub fn twr_exchange(ex: &TwrExchange, initiator: &ClockModel, responder: &ClockModel) -> TimestampSet {
    let ev = events(ex);
    ev.stamp((ex.initiator, initiator), (ex.responder, responder), ev.fin + ev.flight_final, || 0.0)
}

/// Timestamp noise and packet loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// Standard deviation of the additive Gaussian error on every timestamp
    /// (s).
    pub timestamp_sigma: f64,
    /// Probability that an exchange is lost entirely.
    pub loss_probability: f64,
}

impl Channel {
    pub const IDEAL: Channel = Channel { timestamp_sigma: 0.0, loss_probability: 0.0 };

    pub(crate) fn noise_fn<'a, R: Rng>(&self, rng: &'a mut R) -> impl FnMut() -> f64 + 'a {
        let normal = (self.timestamp_sigma > 0.0)
            .then(|| Normal::new(0.0, self.timestamp_sigma).expect("finite sigma"));
        move || normal.as_ref().map_or(0.0, |n| n.sample(rng))
    }

    /// Runs `ex` over this channel.
    pub fn exchange<R: Rng>(
        &self,
        ex: &TwrExchange,
        initiator: &ClockModel,
        responder: &ClockModel,
        rng: &mut R,
    ) -> Result<TimestampSet, RangingError> {
        if self.loss_probability > 0.0 && rng.random::<f64>() < self.loss_probability {
            return Err(RangingError::MissingExchange {
                initiator: ex.initiator,
                responder: ex.responder,
            });
        }
        let ev = events(ex);
        let wall = ev.fin + ev.flight_final;
        Ok(ev.stamp((ex.initiator, initiator), (ex.responder, responder), wall, self.noise_fn(rng)))
    }
}

struct Intervals {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn intervals(ts: &TimestampSet) -> Result<Intervals, RangingError> {
    let a = ts.t_sf - ts.t_sp;
    if !(a > 0.0) {
        return Err(RangingError::MalformedExchange {
            initiator: ts.initiator,
            responder: ts.responder,
            round: a,
        });
    }
    Ok(Intervals { a, b: ts.t_rf - ts.t_rp, c: ts.t_rf - ts.t_sr, d: ts.t_sf - ts.t_rr })
}

/// Double-sided time of flight `1/2 (c - d b / a)`, with `a = t_SF - t_SP`,
/// `b = t_RF - t_RP`, `c = t_RF - t_SR` and `d = t_SF - t_RR`. Pair biases
/// are not removed.
pub fn tof_estimate(ts: &TimestampSet) -> Result<f64, RangingError> {
    let Intervals { a, b, c, d } = intervals(ts)?;
    Ok(0.5 * (c - d * b / a))
}

/// Single-sided estimate `1/2 (c - d)`; exposed for comparison only, it
/// does not compensate clock skew.
pub fn single_sided_tof(ts: &TimestampSet) -> Result<f64, RangingError> {
    let Intervals { c, d, .. } = intervals(ts)?;
    Ok(0.5 * (c - d))
}

/// Raw distance `m_{j,i}` from the exchange and its offset-corrected value.
pub fn distance_estimate(
    ts: &TimestampSet,
    offsets: &OffsetTable,
) -> Result<RangingMeasurement, RangingError> {
    let raw = SPEED_OF_LIGHT * tof_estimate(ts)?;
    Ok(RangingMeasurement {
        time: ts.wall_time,
        initiator: ts.initiator,
        responder: ts.responder,
        raw,
        corrected: raw - offsets.get_or_zero(ts.initiator, ts.responder),
        accepted: raw > 0.0,
        signal_power: 0.0,
    })
}
