//! Event-file ingestion: bin per-row event start times into per-second
//! counts, and read entrance times for the covariate model.
//!
//! Events CSV: header `start_s`, one event start time (seconds) per row.
//! Entries CSV: header `entry_s`, one entrance time (seconds) per row.
//! Bin t covers the interval ((t-1)*dt, t*dt]; times must lie in
//! [1, t_len*dt].

use std::fs;
use std::path::Path;

use penhmm::CountSeries;

use crate::CliError;

pub fn ingest_events(
    events: &Path,
    entries: Option<&Path>,
    t_len: usize,
    dt: f64,
) -> Result<CountSeries, CliError> {
    let mut counts = vec![0u32; t_len];
    for (line_no, value) in read_column(events, "start_s")? {
        let bin = time_to_bin(value, t_len, dt)
            .map_err(|msg| CliError::Data(format!("{}:{line_no}: {msg}", events.display())))?;
        counts[bin - 1] += 1;
    }

    let entrance_times = match entries {
        None => None,
        Some(path) => {
            let mut bins = Vec::new();
            for (line_no, value) in read_column(path, "entry_s")? {
                let bin = time_to_bin(value, t_len, dt)
                    .map_err(|msg| CliError::Data(format!("{}:{line_no}: {msg}", path.display())))?;
                bins.push(bin);
            }
            bins.sort_unstable();
            bins.dedup();
            Some(bins)
        }
    };

    CountSeries::new(counts, dt, entrance_times).map_err(CliError::from)
}

/// Map a time in seconds to its 1-based bin, rejecting out-of-range values.
fn time_to_bin(s: f64, t_len: usize, dt: f64) -> Result<usize, String> {
    if !s.is_finite() || s < 1.0 || s > t_len as f64 * dt {
        return Err(format!(
            "time {s} outside [1, {}]",
            t_len as f64 * dt
        ));
    }
    let bin = (s / dt).ceil() as usize;
    Ok(bin.clamp(1, t_len))
}

/// Parse a one-column CSV with the given header, yielding (line number,
/// value) pairs. Blank lines are skipped.
fn read_column(path: &Path, header: &str) -> Result<Vec<(usize, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != header {
                return Err(CliError::Data(format!(
                    "{}:{line_no}: expected header \"{header}\", found \"{line}\"",
                    path.display()
                )));
            }
            saw_header = true;
            continue;
        }
        let value: f64 = line.parse().map_err(|e| {
            CliError::Data(format!("{}:{line_no}: parse error: {e}", path.display()))
        })?;
        out.push((line_no, value));
    }
    if !saw_header {
        return Err(CliError::Data(format!(
            "{}: empty file, expected header \"{header}\"",
            path.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_event_file_gives_zero_counts() {
        let f = write_temp("start_s\n");
        let data = ingest_events(f.path(), None, 10, 1.0).unwrap();
        assert_eq!(data.counts, vec![0; 10]);
    }

    #[test]
    fn events_bin_directly() {
        let f = write_temp("start_s\n2\n2\n5\n");
        let data = ingest_events(f.path(), None, 5, 1.0).unwrap();
        assert_eq!(data.counts, vec![0, 2, 0, 0, 1]);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let f = write_temp("start_s\n3\nnot_a_number\n");
        let err = ingest_events(f.path(), None, 5, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:"), "{msg}");
    }

    #[test]
    fn out_of_range_events_are_rejected() {
        for bad in ["0.5", "6", "-1"] {
            let f = write_temp(&format!("start_s\n{bad}\n"));
            assert!(ingest_events(f.path(), None, 5, 1.0).is_err(), "{bad}");
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let f = write_temp("starts\n1\n");
        assert!(ingest_events(f.path(), None, 5, 1.0).is_err());
    }

    #[test]
    fn entries_are_sorted_and_deduped() {
        let ev = write_temp("start_s\n1\n");
        let en = write_temp("entry_s\n7\n3\n7\n");
        let data = ingest_events(ev.path(), Some(en.path()), 10, 1.0).unwrap();
        assert_eq!(data.entrance_times, Some(vec![3, 7]));
    }

    #[test]
    fn fractional_dt_bins() {
        // dt = 2: bin 1 covers (0, 2], bin 2 covers (2, 4].
        let f = write_temp("start_s\n2\n2.5\n4\n");
        let data = ingest_events(f.path(), None, 3, 2.0).unwrap();
        assert_eq!(data.counts, vec![1, 2, 0]);
    }
}
