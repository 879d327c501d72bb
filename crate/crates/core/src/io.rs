//! Probe records as CSV and WAV.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::wavefield::ProbeRecord;

/// `time_s` followed by one column per probe. Values are written with 17
/// significant digits, enough to read every f64 back exactly.
pub fn write_records_csv<W: Write>(records: &[ProbeRecord], out: &mut W) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    let n = records.first().map_or(0, |r| r.samples.len());
    let rate = records.first().map_or(1.0, |r| r.sample_rate_hz);
    if records.iter().any(|r| r.samples.len() != n || r.sample_rate_hz != rate) {
        return Err(Error::Dimension("records differ in length or sample rate".into()));
    }
    write!(out, "time_s").map_err(io)?;
    for r in records {
        write!(out, ",{}", r.label).map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for k in 0..n {
        write!(out, "{:.16e}", k as f64 / rate).map_err(io)?;
        for r in records {
            write!(out, ",{:.16e}", r.samples[k]).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

/// Inverse of [`write_records_csv`]; the rate is taken from the time column.
pub fn read_records_csv<R: BufRead>(input: R) -> Result<Vec<ProbeRecord>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?.map_err(|e| Error::io("<csv>", e))?;
    let mut cols = header.split(',');
    if cols.next() != Some("time_s") {
        return Err(Error::Format("first CSV column must be time_s".into()));
    }
    let labels: Vec<String> = cols.map(str::to_owned).collect();
    let mut times = Vec::new();
    let mut data = vec![Vec::new(); labels.len()];
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let values = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("row {}: bad number '{v}'", row + 2))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != labels.len() + 1 {
            return Err(Error::Format(format!("row {} has {} columns", row + 2, values.len())));
        }
        times.push(values[0]);
        for (d, v) in data.iter_mut().zip(&values[1..]) {
            d.push(*v);
        }
    }
    let rate = if times.len() > 1 { 1.0 / (times[1] - times[0]) } else { f64::NAN };
    Ok(labels
        .into_iter()
        .zip(data)
        .map(|(label, samples)| ProbeRecord { label, samples, sample_rate_hz: rate })
        .collect())
}

/// Mono 32-bit float WAV at the record's sample rate (must be integral).
pub fn write_record_wav<W: Write + std::io::Seek>(record: &ProbeRecord, out: W) -> Result<()> {
    let rate = record.sample_rate_hz;
    if rate.fract() != 0.0 || !(rate >= 1.0 && rate <= u32::MAX as f64) {
        return Err(Error::InvalidParameter(format!("WAV needs an integer sample rate, got {rate}")));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav = |e| Error::Wav { path: Path::new(&record.label).to_path_buf(), source: e };
    let mut w = hound::WavWriter::new(out, spec).map_err(wav)?;
    for &v in &record.samples {
        w.write_sample(v as f32).map_err(wav)?;
    }
    w.finalize().map_err(wav)
}
