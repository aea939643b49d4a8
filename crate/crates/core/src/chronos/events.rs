use std::fmt;
use std::io::{self, Write};

/// Kinds of simulated events. The declaration order is the tie-break order
/// for events of one learner at the same instant: work that finishes is
/// processed before work that starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    GradDone,
    AvgDone,
    Update,
    GradStart,
    AvgStart,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GradStart => "grad_start",
            Self::GradDone => "grad_done",
            Self::AvgStart => "avg_start",
            Self::AvgDone => "avg_done",
            Self::Update => "update",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub learner: usize,
    pub kind: EventKind,
    /// The learner-local iteration this event belongs to.
    pub iteration: u64,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of learner {} iteration {} at t={}",
            self.kind, self.learner, self.iteration, self.t
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
    /// Simulated time at which each epoch completed.
    pub epoch_ends: Vec<f64>,
    pub total_time: f64,
}

impl EventLog {
    /// Duration of the first epoch.
    pub fn epoch_time(&self) -> f64 {
        self.epoch_ends.first().copied().unwrap_or(self.total_time)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,learner,event,iteration")?;
        for e in &self.events {
            writeln!(out, "{:.16e},{},{},{}", e.t, e.learner, e.kind, e.iteration)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
