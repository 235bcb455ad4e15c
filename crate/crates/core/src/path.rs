//! Càdlàg piecewise-constant paths.
//!
//! A value of `0.0` encodes the state at infinity.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// What happened at a sojourn boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// The walker entered a different site.
    Move,
    /// The walker re-entered the site it just left.
    SelfLoop,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Move => "move",
            EventKind::SelfLoop => "self-loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub value: f64,
    pub kind: EventKind,
}

/// How events are counted in a time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpConvention {
    /// Every sojourn boundary, self-loops included.
    #[default]
    Transition,
    /// Only boundaries where the recorded value changes.
    ValueChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPath {
    initial_value: f64,
    events: Vec<PathEvent>,
    horizon: f64,
}

impl StepPath {
    pub fn new(initial_value: f64, events: Vec<PathEvent>, horizon: f64) -> Result<Self> {
        check_positive("horizon", horizon)?;
        if !(initial_value >= 0.0 && initial_value.is_finite()) {
            return Err(Error::Format(format!(
                "initial value {initial_value} must be nonnegative"
            )));
        }
        let mut last = 0.0;
        for e in &events {
            if e.time.is_nan() || e.time <= last {
                return Err(Error::Format(format!(
                    "event time {} does not exceed the previous time {last}",
                    e.time
                )));
            }
            if !(e.value >= 0.0 && e.value.is_finite()) {
                return Err(Error::Format(format!(
                    "event value {} must be nonnegative",
                    e.value
                )));
            }
            last = e.time;
        }
        if last > horizon {
            return Err(Error::Format(format!(
                "event time {last} exceeds horizon {horizon}"
            )));
        }
        Ok(StepPath {
            initial_value,
            events,
            horizon,
        })
    }

    /// Constant path without events.
    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        StepPath::new(value, Vec::new(), horizon)
    }

    pub(crate) fn from_sorted_unchecked(
        initial_value: f64,
        events: Vec<PathEvent>,
        horizon: f64,
    ) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].time < w[1].time));
        debug_assert!(events.last().is_none_or(|e| e.time <= horizon));
        StepPath {
            initial_value,
            events,
            horizon,
        }
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn events(&self) -> &[PathEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Range {
                time: t,
                horizon: self.horizon,
            })
        }
    }

    /// Number of events with time `<= t`.
    fn events_up_to(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Right-continuous value at time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match self.events_up_to(t) {
            0 => self.initial_value,
            k => self.events[k - 1].value,
        })
    }

    /// `sup_{r ∈ [0, t]} Z(r)`.
    pub fn running_sup(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let k = self.events_up_to(t);
        Ok(self.events[..k]
            .iter()
            .map(|e| e.value)
            .fold(self.initial_value, f64::max))
    }

    /// Events in the window `(t, t + s]`.
    pub fn count_events(&self, t: f64, s: f64, convention: JumpConvention) -> Result<usize> {
        check_positive("s", s)?;
        self.check_time(t)?;
        self.check_time(t + s)?;
        let lo = self.events_up_to(t);
        let hi = self.events_up_to(t + s);
        Ok(match convention {
            JumpConvention::Transition => hi - lo,
            JumpConvention::ValueChange => (lo..hi)
                .filter(|&k| {
                    let before = if k == 0 {
                        self.initial_value
                    } else {
                        self.events[k - 1].value
                    };
                    self.events[k].value != before
                })
                .count(),
        })
    }

    /// Lebesgue time spent at each listed value on `[0, horizon]`.
    pub fn occupation_times(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        let mut credit = |v: f64, dt: f64| {
            if let Some(i) = values.iter().position(|&x| x == v) {
                out[i] += dt;
            }
        };
        let mut start = 0.0;
        let mut current = self.initial_value;
        for e in &self.events {
            credit(current, e.time - start);
            start = e.time;
            current = e.value;
        }
        credit(current, self.horizon - start);
        out
    }

    /// Multiplies values by `space_factor` and divides times by `time_factor`.
    pub fn rescale(&self, space_factor: f64, time_factor: f64) -> Result<StepPath> {
        check_positive("space_factor", space_factor)?;
        check_positive("time_factor", time_factor)?;
        let events = self
            .events
            .iter()
            .map(|e| PathEvent {
                time: e.time / time_factor,
                value: e.value * space_factor,
                kind: e.kind,
            })
            .collect();
        StepPath::new(
            self.initial_value * space_factor,
            events,
            self.horizon / time_factor,
        )
    }

    /// CSV with header `time,value,kind`; the first row is `(0, initial, start)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,value,kind")?;
        writeln!(out, "0,{},start", format_sig(self.initial_value))?;
        for e in &self.events {
            writeln!(
                out,
                "{},{},{}",
                format_sig(e.time),
                format_sig(e.value),
                e.kind.as_str()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the CSV layout written by [`StepPath::write_csv`].
    pub fn read_csv<R: BufRead>(input: R, horizon: f64) -> Result<StepPath> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or(Error::Empty("path csv"))?
            .map_err(|e| Error::Format(e.to_string()))?;
        if header.trim() != "time,value,kind" {
            return Err(Error::Format(format!("unexpected header `{header}`")));
        }
        let mut initial = None;
        let mut events = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (Some(t), Some(v), Some(k), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::Format(format!("expected three columns in `{line}`")));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}`")))
            };
            let (time, value) = (parse(t)?, parse(v)?);
            match (k, initial) {
                ("start", None) if time == 0.0 => initial = Some(value),
                ("move", Some(_)) => events.push(PathEvent {
                    time,
                    value,
                    kind: EventKind::Move,
                }),
                ("self-loop", Some(_)) => events.push(PathEvent {
                    time,
                    value,
                    kind: EventKind::SelfLoop,
                }),
                _ => return Err(Error::Format(format!("unexpected row `{line}`"))),
            }
        }
        StepPath::new(
            initial.ok_or(Error::Empty("path csv start row"))?,
            events,
            horizon,
        )
    }
}

/// `path` with space and time rescaled; see [`StepPath::rescale`].
pub fn rescale_path(path: &StepPath, space_factor: f64, time_factor: f64) -> Result<StepPath> {
    path.rescale(space_factor, time_factor)
}

/// Fixed-point decimal with 12 significant digits, `.` as separator.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 {
            "0".to_owned()
        } else {
            x.to_string()
        };
    }
    // exponent after rounding to 12 significant digits
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').expect("scientific format") + 1..]
        .parse()
        .expect("integer exponent");
    let decimals = (11 - exp).max(0) as usize;
    let mut s = String::new();
    write!(s, "{x:.decimals$}").expect("formatting into a String");
    s
}

/// Exploration times of the clock marks and the physical clock after each sojourn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClockRecord {
    pub exploration_times: Vec<f64>,
    pub physical_times: Vec<f64>,
}

impl ClockRecord {
    pub(crate) fn push(&mut self, exploration: f64, physical: f64) {
        self.exploration_times.push(exploration);
        self.physical_times.push(physical);
    }

    pub fn len(&self) -> usize {
        self.exploration_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exploration_times.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, value: f64, kind: EventKind) -> PathEvent {
        PathEvent { time, value, kind }
    }

    fn sample_path() -> StepPath {
        StepPath::new(
            2.0,
            vec![
                ev(1.0, 5.0, EventKind::Move),
                ev(2.0, 5.0, EventKind::SelfLoop),
                ev(3.5, 1.0, EventKind::Move),
            ],
            6.0,
        )
        .unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(StepPath::new(
            1.0,
            vec![ev(2.0, 1.0, EventKind::Move), ev(2.0, 3.0, EventKind::Move)],
            5.0
        )
        .is_err());
        assert!(StepPath::new(1.0, vec![ev(6.0, 1.0, EventKind::Move)], 5.0).is_err());
        assert!(StepPath::new(1.0, vec![ev(0.0, 1.0, EventKind::Move)], 5.0).is_err());
        assert!(StepPath::new(-1.0, vec![], 5.0).is_err());
        assert!(StepPath::new(1.0, vec![], 0.0).is_err());
    }

    #[test]
    fn value_at_is_cadlag() {
        let p = StepPath::new(2.0, vec![ev(1.0, 5.0, EventKind::Move)], 3.0).unwrap();
        assert_eq!(p.value_at(1.0).unwrap(), 5.0);
        assert_eq!(p.value_at(1.0 - 1e-12).unwrap(), 2.0);
        assert_eq!(p.value_at(0.0).unwrap(), 2.0);
        assert!(matches!(p.value_at(3.5), Err(Error::Range { .. })));
        let c = StepPath::constant(4.0, 10.0).unwrap();
        assert!((0..=10).all(|t| c.value_at(t as f64).unwrap() == 4.0));
    }

    #[test]
    fn running_sup_cases() {
        let p = sample_path();
        assert_eq!(p.running_sup(0.5).unwrap(), 2.0);
        assert_eq!(p.running_sup(6.0).unwrap(), 5.0);
        assert_eq!(
            StepPath::constant(3.0, 1.0)
                .unwrap()
                .running_sup(1.0)
                .unwrap(),
            3.0
        );
    }

    #[test]
    fn count_conventions() {
        let p = sample_path();
        assert_eq!(
            p.count_events(4.0, 2.0, JumpConvention::Transition)
                .unwrap(),
            0
        );
        assert_eq!(
            p.count_events(4.0, 2.0, JumpConvention::ValueChange)
                .unwrap(),
            0
        );
        // only the self-loop at t=2 in (1.5, 2.5]
        assert_eq!(
            p.count_events(1.5, 1.0, JumpConvention::Transition)
                .unwrap(),
            1
        );
        assert_eq!(
            p.count_events(1.5, 1.0, JumpConvention::ValueChange)
                .unwrap(),
            0
        );
        // left end open, right end closed
        assert_eq!(
            p.count_events(1.0, 1.0, JumpConvention::Transition)
                .unwrap(),
            1
        );
        assert_eq!(
            p.count_events(0.0, 6.0, JumpConvention::Transition)
                .unwrap(),
            3
        );
        assert_eq!(
            p.count_events(0.0, 6.0, JumpConvention::ValueChange)
                .unwrap(),
            2
        );
        assert!(p
            .count_events(5.0, 2.0, JumpConvention::Transition)
            .is_err());
    }

    #[test]
    fn occupation_interval_sums() {
        let p = StepPath::new(
            3.0,
            vec![ev(2.0, 1.0, EventKind::Move), ev(3.0, 3.0, EventKind::Move)],
            4.0,
        )
        .unwrap();
        assert_eq!(p.occupation_times(&[3.0, 1.0]), vec![3.0, 1.0]);
        assert_eq!(p.occupation_times(&[7.0]), vec![0.0]);
    }

    #[test]
    fn rescale_single_event() {
        let p = StepPath::new(1.0, vec![ev(2.0, 3.0, EventKind::Move)], 4.0).unwrap();
        let q = rescale_path(&p, 10.0, 4.0).unwrap();
        assert_eq!(q.events()[0].time, 0.5);
        assert_eq!(q.events()[0].value, 30.0);
        assert_eq!(q.horizon(), 1.0);
        assert_eq!(rescale_path(&p, 1.0, 1.0).unwrap(), p);
    }

    #[test]
    fn sig_format() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1.00000000000");
        assert_eq!(format_sig(123.456), "123.456000000");
        assert_eq!(format_sig(0.00012345678901234), "0.000123456789012");
        assert_eq!(format_sig(9.999999999999e5), "1000000.00000");
        assert_eq!(format_sig(999999.999999), "999999.999999");
        assert_eq!(format_sig(9.9999999999996), "10.0000000000");
        assert_eq!(format_sig(1.5e13), "15000000000000");
    }

    #[test]
    fn csv_layout_and_parse() {
        let p = sample_path();
        let text = p.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,value,kind"));
        assert_eq!(lines.next(), Some("0,2.00000000000,start"));
        assert_eq!(lines.next(), Some("1.00000000000,5.00000000000,move"));
        assert_eq!(lines.next(), Some("2.00000000000,5.00000000000,self-loop"));
        let back = StepPath::read_csv(text.as_bytes(), p.horizon()).unwrap();
        assert_eq!(back, p);
        assert!(StepPath::read_csv("t,v\n".as_bytes(), 1.0).is_err());
    }
}
