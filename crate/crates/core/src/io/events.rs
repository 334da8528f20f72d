//! Plain-text event streams: one `t x y p` record per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{create, open, IoError};
use crate::event::{Event, Polarity};

/// Reads a `t x y p` stream. `p` is 0 or 1, `#` starts a comment line.
pub fn read_events(path: &Path) -> Result<Vec<Event>, IoError> {
    parse_events(BufReader::new(open(path)?))
}

pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<Event>, IoError> {
    let mut events = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(IoError::Parse { line: n, message: format!("expected 4 fields, found {}", fields.len()) });
        }
        let num = |s: &str, what: &str| -> Result<f64, IoError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::Parse { line: n, message: format!("bad {what} {s:?}") })
        };
        let t = num(fields[0], "timestamp")?;
        if t < 0.0 {
            return Err(IoError::Parse { line: n, message: format!("negative timestamp {t}") });
        }
        let x = num(fields[1], "x")?;
        let y = num(fields[2], "y")?;
        let polarity = match fields[3] {
            "1" => Polarity::Positive,
            "0" => Polarity::Negative,
            p => return Err(IoError::Parse { line: n, message: format!("polarity must be 0 or 1, got {p:?}") }),
        };
        if t < previous {
            return Err(IoError::Regression { line: n, t, previous });
        }
        previous = t;
        events.push(Event::new(x, y, t, polarity));
    }
    Ok(events)
}

/// Writes events so that [`parse_events`] reproduces every value exactly.
pub fn write_events_to<W: Write>(writer: W, events: &[Event]) -> Result<(), IoError> {
    let mut w = BufWriter::new(writer);
    for e in events {
        let p = match e.polarity {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        };
        writeln!(w, "{:?} {} {} {}", e.t, e.x, e.y, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<(), IoError> {
    write_events_to(create(path)?, events)
}
