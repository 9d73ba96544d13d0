//! Trace CSV: `#`-prefixed metadata lines, then a header row and one row per
//! frame. Numbers use the shortest representation that parses back to the
//! same f64.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::IoError;
use crate::trace::{Baseline, HemodynamicTrace, TraceSample};

pub const TRACE_COLUMNS: [&str; 7] = [
    "t_s", "mean_adu", "k_raw_sq", "k_adj_sq", "bfi", "bvi", "valid",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(trace: &HemodynamicTrace, out: W) -> Result<(), IoError> {
    let mut out = out;
    let mut meta = String::new();
    let _ = writeln!(meta, "# fps={}", trace.fps);
    let _ = writeln!(meta, "# dark_offset_adu={}", trace.dark_offset);
    let _ = writeln!(meta, "# normalized={}", trace.normalized);
    if let Some(b) = trace.baseline {
        let _ = writeln!(meta, "# baseline_bfi={}", b.bfi);
        let _ = writeln!(meta, "# baseline_intensity_adu={}", b.intensity);
        let _ = writeln!(meta, "# baseline_window_s={},{}", b.window.0, b.window.1);
    }
    out.write_all(meta.as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for s in &trace.samples {
        w.write_record([
            s.t.to_string(),
            s.mean_adu.to_string(),
            s.k_raw_sq.to_string(),
            s.k_adj_sq.to_string(),
            opt(s.bfi),
            opt(s.bvi),
            u8::from(s.is_valid()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn bad(line: u64, message: impl Into<String>) -> IoError {
    IoError::Csv {
        line,
        message: message.into(),
    }
}

pub fn read_trace_csv<R: Read>(mut input: R) -> Result<HemodynamicTrace, IoError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut fps = None;
    let mut dark = None;
    let mut normalized = false;
    let (mut b_bfi, mut b_int, mut b_win) = (None, None, None);
    let mut meta_lines = 0u64;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        meta_lines += 1;
        body_start += line.len();
        let Some((k, v)) = rest.split_once('=') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(meta_lines, format!("{k}: not a number: {v:?}")))
        };
        match k {
            "fps" => fps = Some(num(v)?),
            "dark_offset_adu" => dark = Some(num(v)?),
            "normalized" => {
                normalized = v
                    .parse()
                    .map_err(|_| bad(meta_lines, format!("normalized: not a boolean: {v:?}")))?
            }
            "baseline_bfi" => b_bfi = Some(num(v)?),
            "baseline_intensity_adu" => b_int = Some(num(v)?),
            "baseline_window_s" => {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| bad(meta_lines, "baseline_window_s: expected two values"))?;
                b_win = Some((num(a.trim())?, num(b.trim())?));
            }
            _ => {}
        }
    }
    let fps = fps.ok_or_else(|| bad(1, "missing '# fps=' metadata line"))?;
    let dark = dark.ok_or_else(|| bad(1, "missing '# dark_offset_adu=' metadata line"))?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(bad(1, "fps must be positive"));
    }

    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[body_start..]);
    let headers = r
        .headers()
        .map_err(|e| bad(meta_lines + 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_COLUMNS {
        return Err(bad(
            meta_lines + 1,
            format!("header must be {}", TRACE_COLUMNS.join(",")),
        ));
    }
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            bad(
                meta_lines + e.position().map_or(0, |p| p.line()),
                e.to_string(),
            )
        })?;
        let line = meta_lines + rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, IoError> {
            rec[i].parse::<f64>().map_err(|_| {
                bad(
                    line,
                    format!("{}: not a number: {:?}", TRACE_COLUMNS[i], &rec[i]),
                )
            })
        };
        let optional = |i: usize| -> Result<Option<f64>, IoError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                field(i).map(Some)
            }
        };
        let sample = TraceSample {
            t: field(0)?,
            mean_adu: field(1)?,
            k_raw_sq: field(2)?,
            k_adj_sq: field(3)?,
            bfi: optional(4)?,
            bvi: optional(5)?,
        };
        let valid = match &rec[6] {
            "0" => false,
            "1" => true,
            v => return Err(bad(line, format!("valid: expected 0 or 1, got {v:?}"))),
        };
        if valid != sample.is_valid() {
            return Err(bad(line, "valid flag disagrees with the bfi cell"));
        }
        samples.push(sample);
    }
    let mut trace = HemodynamicTrace::from_samples(fps, dark, samples)
        .map_err(|e| bad(meta_lines + 1, e.to_string()))?;
    if let (Some(bfi), Some(intensity), Some(window)) = (b_bfi, b_int, b_win) {
        trace.baseline = Some(Baseline {
            bfi,
            intensity,
            window,
        });
    }
    trace.normalized = normalized;
    Ok(trace)
}
