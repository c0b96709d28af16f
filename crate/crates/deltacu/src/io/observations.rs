//! Observation CSV ingestion: `time,stratum,positives,sample_size` with
//! stratum `fsw` or `client`. Lines starting with `#` are provenance
//! comments.

use std::path::Path;

use crate::epi::{Observation, Stratum};
use crate::{Error, Result};

/// Parse observations from raw CSV bytes. Rows are validated, duplicate
/// (time, stratum) pairs rejected, and the result is time-sorted.
pub fn parse_observations_bytes(bytes: &[u8]) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("observations header: {e}")))?;
        let expected = ["time", "stratum", "positives", "sample_size"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Data(format!(
                "observations header must be {}, got {}",
                expected.join(","),
                got.join(",")
            )));
        }
    }

    let mut out: Vec<Observation> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("observations parse: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::Data(format!("line {line}: missing column {}", i + 1)))
        };
        let time: f64 = field(0)?
            .parse()
            .map_err(|e| Error::Data(format!("line {line}: bad time: {e}")))?;
        if !time.is_finite() {
            return Err(Error::Data(format!("line {line}: time must be finite")));
        }
        let stratum: Stratum = field(1)?
            .parse()
            .map_err(|e: Error| Error::Data(format!("line {line}: {}", e.message())))?;
        let positives: u32 = field(2)?
            .parse()
            .map_err(|e| Error::Data(format!("line {line}: bad positives: {e}")))?;
        let sample_size: u32 = field(3)?
            .parse()
            .map_err(|e| Error::Data(format!("line {line}: bad sample_size: {e}")))?;
        let obs = Observation { time, stratum, positives, sample_size };
        obs.validate()
            .map_err(|e| Error::Data(format!("line {line}: {}", e.message())))?;
        if out.iter().any(|o| o.time == obs.time && o.stratum == obs.stratum) {
            return Err(Error::Data(format!(
                "line {line}: duplicate observation at time {} for stratum {}",
                obs.time, obs.stratum
            )));
        }
        out.push(obs);
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.stratum.cmp(&b.stratum)));
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<Observation>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read observations {}: {e}", path.display())))?;
    parse_observations_bytes(&bytes)
}

/// Serialize observations with a provenance comment line on top.
pub fn observations_to_csv(obs: &[Observation], provenance: &str) -> String {
    let mut out = String::new();
    out.push_str(provenance);
    out.push('\n');
    out.push_str("time,stratum,positives,sample_size\n");
    for o in obs {
        out.push_str(&format!("{},{},{},{}\n", o.time, o.stratum, o.positives, o.sample_size));
    }
    out
}
