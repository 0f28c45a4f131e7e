//! Rational time and frame-rate types.
//!
//! Timeline arithmetic is exact: positions and durations are reduced
//! fractions of a second, so frame-boundary splits never drift.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Timeline tick rate used when a float-derived position has to be snapped
/// back onto the rational grid (the 90 kHz MPEG system clock).
pub const TICKS_PER_SECOND: i128 = 90_000;

/// Largest denominator used when converting a float factor to a rational.
pub const FACTOR_DENOMINATOR: i128 = 1_000_000;

/// Seconds as a reduced fraction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Time(Ratio<i128>);

impl Time {
    pub const ZERO: Time = Time(Ratio::new_raw(0, 1));

    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        Time(Ratio::new(num, den))
    }

    pub fn from_secs(secs: i64) -> Self {
        Time(Ratio::from_integer(secs as i128))
    }

    /// Converts milliseconds exactly.
    pub fn from_millis(ms: i64) -> Self {
        Time::new(ms as i128, 1000)
    }

    /// Nearest tick on the 90 kHz grid.
    pub fn from_secs_f64(secs: f64) -> Self {
        let ticks = (secs * TICKS_PER_SECOND as f64).round() as i128;
        Time::new(ticks, TICKS_PER_SECOND)
    }

    /// Exact start time of a frame.
    pub fn from_frames(frames: u64, fps: Fps) -> Self {
        Time::new(frames as i128 * fps.den as i128, fps.num as i128)
    }

    /// Exact time of a sample boundary.
    pub fn from_samples(samples: u64, sample_rate: u32) -> Self {
        Time::new(samples as i128, sample_rate as i128)
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0 < Ratio::zero()
    }

    /// Smallest tick-grid time that is not earlier than `self`.
    pub fn ceil_to_tick(&self) -> Self {
        let scaled = self.0 * TICKS_PER_SECOND;
        Time::new(scaled.ceil().to_integer(), TICKS_PER_SECOND)
    }

    /// Frame index containing this time (floor), clamped at zero.
    pub fn frame_floor(&self, fps: Fps) -> u64 {
        let frames = self.0 * Ratio::new(fps.num as i128, fps.den as i128);
        frames.floor().to_integer().max(0) as u64
    }

    /// Nearest whole frame count for this duration.
    pub fn frame_round(&self, fps: Fps) -> u64 {
        let frames = self.0 * Ratio::new(fps.num as i128, fps.den as i128);
        frames.round().to_integer().max(0) as u64
    }

    /// Nearest whole sample count for this duration.
    pub fn sample_round(&self, sample_rate: u32) -> u64 {
        (self.0 * sample_rate as i128).round().to_integer().max(0) as u64
    }

    pub fn min(self, other: Time) -> Time {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Time) -> Time {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl fmt::Debug for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}s", self.numer(), self.denom())
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.as_secs_f64())
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl Neg for Time {
    type Output = Time;
    fn neg(self) -> Time {
        Time(-self.0)
    }
}

impl Mul<Speed> for Time {
    type Output = Time;
    fn mul(self, rhs: Speed) -> Time {
        Time(self.0 * rhs.0)
    }
}

impl Div<Speed> for Time {
    type Output = Time;
    fn div(self, rhs: Speed) -> Time {
        Time(self.0 / rhs.0)
    }
}

impl std::iter::Sum for Time {
    fn sum<I: Iterator<Item = Time>>(iter: I) -> Time {
        iter.fold(Time::ZERO, |a, b| a + b)
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: i128,
    den: i128,
}

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RationalRepr { num: self.numer(), den: self.denom() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = RationalRepr::deserialize(d)?;
        if r.den <= 0 {
            return Err(serde::de::Error::custom("time denominator must be positive"));
        }
        Ok(Time::new(r.num, r.den))
    }
}

/// Dimensionless playback factor. `2` plays twice as fast.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Speed(Ratio<i128>);

impl Speed {
    pub const ONE: Speed = Speed(Ratio::new_raw(1, 1));

    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        Speed(Ratio::new(num, den))
    }

    /// Rational approximation on a 1e-6 grid.
    pub fn from_f64(factor: f64) -> Self {
        let num = (factor * FACTOR_DENOMINATOR as f64).round() as i128;
        Speed::new(num, FACTOR_DENOMINATOR)
    }

    pub fn as_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_positive(&self) -> bool {
        self.0 > Ratio::zero()
    }

    pub fn recip(&self) -> Speed {
        Speed(self.0.recip())
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }
}

impl Default for Speed {
    fn default() -> Self {
        Speed::ONE
    }
}

impl Mul for Speed {
    type Output = Speed;
    fn mul(self, rhs: Speed) -> Speed {
        Speed(self.0 * rhs.0)
    }
}

impl fmt::Debug for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}/{}", self.numer(), self.denom())
    }
}

impl Serialize for Speed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RationalRepr { num: self.numer(), den: self.denom() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = RationalRepr::deserialize(d)?;
        if r.den <= 0 {
            return Err(serde::de::Error::custom("speed denominator must be positive"));
        }
        Ok(Speed::new(r.num, r.den))
    }
}

/// Frame rate as `num / den` frames per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub const fn new(num: u32, den: u32) -> Self {
        Fps { num, den }
    }

    pub const fn integer(fps: u32) -> Self {
        Fps { num: fps, den: 1 }
    }

    pub fn is_valid(&self) -> bool {
        self.num > 0 && self.den > 0
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Duration of one frame.
    pub fn frame_duration(&self) -> Time {
        Time::new(self.den as i128, self.num as i128)
    }
}

impl PartialOrd for Fps {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fps {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u64 * other.den as u64).cmp(&(other.num as u64 * self.den as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_times_are_exact() {
        let fps = Fps::new(30000, 1001);
        let t = Time::from_frames(30000, fps);
        assert_eq!(t, Time::from_secs(1001));
        assert_eq!(t.frame_floor(fps), 30000);
    }

    #[test]
    fn retime_round_trip_is_exact() {
        let d = Time::from_secs(10);
        let s = Speed::new(20, 21);
        assert_eq!((d / s) * s, d);
        assert_eq!(d / s, Time::new(21, 2));
    }

    #[test]
    fn serializes_as_num_den() {
        let t = Time::new(3, 2);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"num":3,"den":2}"#);
        let back: Time = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Time>(r#"{"num":1,"den":0}"#).is_err());
    }

    #[test]
    fn tick_snapping() {
        let t = Time::new(1, 3);
        let snapped = t.ceil_to_tick();
        assert!(snapped >= t);
        assert_eq!(snapped, Time::new(30000, 90000));
        assert_eq!(Time::from_secs_f64(1.5), Time::new(3, 2));
    }
}
