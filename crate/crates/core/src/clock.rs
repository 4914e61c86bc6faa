//! Injectable clock. Every timestamp in the engine, the authenticator, and
//! the audit log flows through a [`Clock`] so that scenario runs and tests
//! are reproducible down to the byte.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};

/// A time source that is either the real system clock or a manually
/// controlled fixed clock.
///
/// Fixed clocks are shared: cloning yields a handle onto the same instant,
/// so advancing one handle advances them all.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Wall-clock time.
    System,
    /// A settable instant, advanced explicitly.
    Fixed(Arc<Mutex<DateTime<Utc>>>),
}

impl Clock {
    /// A fixed clock starting at the given instant.
    pub fn fixed(at: DateTime<Utc>) -> Self {
        Clock::Fixed(Arc::new(Mutex::new(at)))
    }

    /// A fixed clock starting at midnight UTC on the given date.
    pub fn fixed_at_date(date: NaiveDate) -> Self {
        Self::fixed(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("valid midnight")))
    }

    /// The current instant according to this clock.
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t.lock().expect("clock lock"),
        }
    }

    /// Today's date according to this clock.
    pub fn today(&self) -> NaiveDate {
        self.now().date_naive()
    }

    /// Advance a fixed clock by the given number of seconds.
    ///
    /// No-op on a system clock.
    pub fn advance_secs(&self, secs: i64) {
        if let Clock::Fixed(t) = self {
            let mut t = t.lock().expect("clock lock");
            *t += Duration::seconds(secs);
        }
    }

    /// Advance a fixed clock by whole days. No-op on a system clock.
    pub fn advance_days(&self, days: i64) {
        self.advance_secs(days * 86_400);
    }
}

impl Default for Clock {
    fn default() -> Self {
        Clock::System
    }
}
