//! Simulation: virtual time, time-squeezed sources, and the discrete-event
//! environment.
//!
//! Virtual time is integer nanoseconds throughout, so long runs never drift.
//! Time-stepped systems replace a generic endpoint with a periodic source
//! emitting at `0, T, 2T, ...`; event-driven systems replay recorded events
//! with each timestamp compressed as `t' = t0 + t / k`, computed in exact
//! rational arithmetic with half-to-even rounding.

pub mod des;

use std::fmt;

use crate::endpoints::{EndpointError, FragmentSource};
use crate::fragment::Fragment;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimulationError {
    #[error("time compression scale must be positive, got {0}")]
    BadScale(String),
    #[error("source period must be positive, got {0}")]
    BadPeriod(i64),
    #[error("virtual time would overflow")]
    TimeOverflow,
}

/// Pacing of virtual time against wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    AsFastAsPossible,
    /// Wall seconds per virtual second; 1.0 is real time.
    WallClock(f64),
}

/// The simulation clock: a nondecreasing virtual now.
#[derive(Debug, Clone)]
pub struct SimClock {
    now: i64,
    pacing: Pacing,
}

impl SimClock {
    pub fn new(pacing: Pacing) -> SimClock {
        SimClock { now: 0, pacing }
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    /// Advances to `t`, sleeping under wall-clock pacing. Going backwards is
    /// a programming error.
    pub fn advance_to(&mut self, t: i64) {
        assert!(t >= self.now, "virtual time must be nondecreasing");
        if let Pacing::WallClock(ratio) = self.pacing {
            let delta_ns = (t - self.now) as f64 * ratio;
            if delta_ns > 0.0 {
                std::thread::sleep(std::time::Duration::from_nanos(delta_ns as u64));
            }
        }
        self.now = t;
    }
}

/// Exact positive rational compression scale `k = num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    num: i64,
    den: i64,
}

impl Scale {
    pub fn new(num: i64, den: i64) -> Result<Scale, SimulationError> {
        if num <= 0 || den <= 0 {
            return Err(SimulationError::BadScale(format!("{num}/{den}")));
        }
        Ok(Scale { num, den })
    }

    pub fn identity() -> Scale {
        Scale { num: 1, den: 1 }
    }

    /// Parses a positive decimal literal such as `10`, `0.5`, or `2.25`
    /// exactly (no float round-trip).
    pub fn parse(text: &str) -> Result<Scale, SimulationError> {
        let bad = || SimulationError::BadScale(text.to_string());
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let num: i64 = digits.parse().map_err(|_| bad())?;
        let den = 10i64
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(bad)?;
        Scale::new(num, den)
    }

    /// Applies `t' = t0 + t / k` in exact integer arithmetic, rounding the
    /// division half-to-even.
    pub fn apply(&self, t0: i64, t: i64) -> Result<i64, SimulationError> {
        // t / k = t * den / num
        let scaled = div_round_half_even(t as i128 * self.den as i128, self.num as i128);
        let shifted = scaled
            .checked_add(t0 as i128)
            .ok_or(SimulationError::TimeOverflow)?;
        i64::try_from(shifted).map_err(|_| SimulationError::TimeOverflow)
    }

    /// Inverse map `t = (t' - t0) * k`, exact when the forward map was.
    pub fn unapply(&self, t0: i64, t_prime: i64) -> Result<i64, SimulationError> {
        let delta = t_prime as i128 - t0 as i128;
        let t = div_round_half_even(delta * self.num as i128, self.den as i128);
        i64::try_from(t).map_err(|_| SimulationError::TimeOverflow)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Integer division rounding half to even (banker's rounding). `den > 0`.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let quot = num.div_euclid(den);
    let rem = num.rem_euclid(den); // 0 <= rem < den
    let twice = rem * 2;
    if twice > den || (twice == den && quot % 2 != 0) {
        quot + 1
    } else {
        quot
    }
}

/// Rewrites recorded event times by `t' = t0 + t / k`, preserving input
/// order. The map is monotone, so relative order of distinct times is kept.
pub fn scale_time(
    events: impl IntoIterator<Item = Fragment>,
    t0: i64,
    k: Scale,
) -> Result<Vec<Fragment>, SimulationError> {
    events
        .into_iter()
        .map(|mut f| {
            f.event_time = k.apply(t0, f.event_time)?;
            Ok(f)
        })
        .collect()
}

/// Wraps a backing dataset so emission `n` occurs at virtual time `n * T`.
/// The original event times are overwritten with the paced schedule.
pub struct TimedSource {
    inner: Box<dyn FragmentSource>,
    period: i64,
    emitted: i64,
}

impl TimedSource {
    pub fn new(inner: Box<dyn FragmentSource>, period: i64) -> Result<TimedSource, SimulationError> {
        if period <= 0 {
            return Err(SimulationError::BadPeriod(period));
        }
        Ok(TimedSource {
            inner,
            period,
            emitted: 0,
        })
    }
}

impl FragmentSource for TimedSource {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError> {
        match self.inner.next()? {
            None => Ok(None),
            Some(mut frag) => {
                frag.event_time = self.emitted * self.period;
                self.emitted += 1;
                Ok(Some(frag))
            }
        }
    }

    fn rejected(&self) -> u64 {
        self.inner.rejected()
    }
}

/// Wraps a backing dataset of timestamped events, compressing each event
/// time by `t' = t0 + t / k`. Input order is preserved.
pub struct ScaledSource {
    inner: Box<dyn FragmentSource>,
    t0: i64,
    k: Scale,
}

impl ScaledSource {
    pub fn new(inner: Box<dyn FragmentSource>, t0: i64, k: Scale) -> ScaledSource {
        ScaledSource { inner, t0, k }
    }
}

impl FragmentSource for ScaledSource {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError> {
        match self.inner.next()? {
            None => Ok(None),
            Some(mut frag) => {
                frag.event_time = self.k.apply(self.t0, frag.event_time).map_err(|e| {
                    EndpointError::Schema {
                        path: std::path::PathBuf::from("<scaled-source>"),
                        detail: e.to_string(),
                    }
                })?;
                Ok(Some(frag))
            }
        }
    }

    fn rejected(&self) -> u64 {
        self.inner.rejected()
    }
}
