//! Per-tick trace rows and their CSV form.
//!
//! Column schema, in order:
//!
//! ```text
//! t, q0..q{n-1}, qd0..qd{n-1}, rho, tau, psi, tcp_speed,
//! d_gt, d_ideal, d_real, d_lidar,
//! then for each channel in base, elbow, tool, lidar:
//!   {ch}_dmin, {ch}_dist, {ch}_ko, {ch}_kl, {ch}_dc, {ch}_dr, {ch}_dsi, {ch}_psi, {ch}_mask
//! events
//! ```
//!
//! Empty cells mean "not applicable on this tick". `psi` columns hold the
//! numeric level (0 stop, 1 reduced, 2 normal); `mask` is the 8-bit keep mask
//! of the latest ring sample; `events` is a `;`-separated list.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ssm::Psi;

pub const CHANNEL_NAMES: [&str; 4] = ["base", "elbow", "tool", "lidar"];
const CHANNEL_FIELDS: [&str; 9] = ["dmin", "dist", "ko", "kl", "dc", "dr", "dsi", "psi", "mask"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelColumns {
    /// Raw sensor minimum (ring d_min or lidar d_lidar).
    pub dmin: Option<f64>,
    /// Distance fed to the safety index.
    pub dist: Option<f64>,
    pub ko: Option<f64>,
    pub kl: Option<f64>,
    pub dc: Option<f64>,
    pub dr: Option<f64>,
    pub dsi: Option<f64>,
    pub psi: Option<Psi>,
    pub mask: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub rho: f64,
    /// Path parameter: nominal task time reached.
    pub tau: f64,
    pub psi: Psi,
    pub tcp_speed: f64,
    pub d_gt: Option<f64>,
    pub d_ideal: Option<f64>,
    pub d_real: Option<f64>,
    pub d_lidar: Option<f64>,
    pub channels: [ChannelColumns; 4],
    pub events: Vec<String>,
}

pub fn header(dof: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dof).map(|i| format!("q{i}")));
    h.extend((0..dof).map(|i| format!("qd{i}")));
    h.extend(["rho", "tau", "psi", "tcp_speed", "d_gt", "d_ideal", "d_real", "d_lidar"].map(String::from));
    for ch in CHANNEL_NAMES {
        h.extend(CHANNEL_FIELDS.iter().map(|f| format!("{ch}_{f}")));
    }
    h.push("events".into());
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TraceRecord {
    fn fields(&self) -> Vec<String> {
        let mut r = vec![self.t.to_string()];
        r.extend(self.q.iter().map(f64::to_string));
        r.extend(self.qdot.iter().map(f64::to_string));
        r.push(self.rho.to_string());
        r.push(self.tau.to_string());
        r.push(self.psi.level().to_string());
        r.push(self.tcp_speed.to_string());
        r.extend([self.d_gt, self.d_ideal, self.d_real, self.d_lidar].map(opt));
        for c in &self.channels {
            r.extend([c.dmin, c.dist, c.ko, c.kl, c.dc, c.dr, c.dsi].map(opt));
            r.push(c.psi.map(|p| p.level().to_string()).unwrap_or_default());
            r.push(c.mask.map(|m| m.to_string()).unwrap_or_default());
        }
        r.push(self.events.join(";"));
        r
    }
}

pub fn write_trace<W: Write>(w: W, rows: &[TraceRecord]) -> Result<()> {
    let dof = rows.first().map_or(0, |r| r.q.len());
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header(dof))?;
    for row in rows {
        wtr.write_record(row.fields())?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, rows: &[TraceRecord]) -> Result<()> {
    write_trace(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

fn parse_opt(s: &str, line: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Trace(format!("line {line}, column {col}: not a number: {s:?}")))
}

fn parse_psi(s: &str, line: usize, col: &str) -> Result<Option<Psi>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<u8>()
        .ok()
        .and_then(Psi::from_level)
        .map(Some)
        .ok_or_else(|| Error::Trace(format!("line {line}, column {col}: invalid state {s:?}")))
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let hdr: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let fixed = 1 + 8 + CHANNEL_NAMES.len() * CHANNEL_FIELDS.len() + 1;
    if hdr.len() < fixed || !(hdr.len() - fixed).is_multiple_of(2) {
        return Err(Error::Trace(format!("unexpected column count {}", hdr.len())));
    }
    let dof = (hdr.len() - fixed) / 2;
    if hdr != header(dof) {
        return Err(Error::Trace("header does not match the trace schema".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            parse_opt(get(k), line, &hdr[k])?.ok_or_else(|| Error::Trace(format!("line {line}, column {}: missing value", hdr[k])))
        };
        let mut k = 0;
        let t = num(k)?;
        k += 1;
        let q = (0..dof).map(|j| num(k + j)).collect::<Result<Vec<_>>>()?;
        k += dof;
        let qdot = (0..dof).map(|j| num(k + j)).collect::<Result<Vec<_>>>()?;
        k += dof;
        let rho = num(k)?;
        let tau = num(k + 1)?;
        let psi = parse_psi(get(k + 2), line, "psi")?.ok_or_else(|| Error::Trace(format!("line {line}: missing psi")))?;
        let tcp_speed = num(k + 3)?;
        k += 4;
        let d = |j: usize| parse_opt(get(k + j), line, &hdr[k + j]);
        let (d_gt, d_ideal, d_real, d_lidar) = (d(0)?, d(1)?, d(2)?, d(3)?);
        k += 4;
        let mut channels = [ChannelColumns::default(); 4];
        for ch in channels.iter_mut() {
            let f = |j: usize| parse_opt(get(k + j), line, &hdr[k + j]);
            *ch = ChannelColumns {
                dmin: f(0)?,
                dist: f(1)?,
                ko: f(2)?,
                kl: f(3)?,
                dc: f(4)?,
                dr: f(5)?,
                dsi: f(6)?,
                psi: parse_psi(get(k + 7), line, &hdr[k + 7])?,
                mask: match get(k + 8) {
                    "" => None,
                    s => Some(s.parse().map_err(|_| Error::Trace(format!("line {line}: invalid mask {s:?}")))?),
                },
            };
            k += CHANNEL_FIELDS.len();
        }
        let events = match get(k) {
            "" => Vec::new(),
            s => s.split(';').map(String::from).collect(),
        };
        rows.push(TraceRecord {
            t,
            q,
            qdot,
            rho,
            tau,
            psi,
            tcp_speed,
            d_gt,
            d_ideal,
            d_real,
            d_lidar,
            channels,
            events,
        });
    }
    if rows.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Trace("time column is not strictly increasing".into()));
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> TraceRecord {
        let mut channels = [ChannelColumns::default(); 4];
        channels[1] = ChannelColumns {
            dmin: Some(0.42),
            dist: Some(0.465),
            ko: Some(-0.1),
            kl: Some(0.3),
            dc: Some(0.665),
            dr: Some(0.995),
            dsi: Some(0.1 + 0.2),
            psi: Some(Psi::Reduced),
            mask: Some(0b1011_0111),
        };
        TraceRecord {
            t,
            q: vec![0.1, 0.2],
            qdot: vec![0.0, -1.0 / 3.0],
            rho: 0.5,
            tau: t * 0.5,
            psi: Psi::Reduced,
            tcp_speed: 1.25,
            d_gt: Some(0.3),
            d_ideal: None,
            d_real: Some(0.465),
            d_lidar: None,
            channels,
            events: vec!["reduce".into(), "pick".into()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![row(0.0), row(0.008)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        assert_eq!(read_trace(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn header_layout() {
        let h = header(6);
        assert_eq!(h.len(), 1 + 12 + 8 + 36 + 1);
        assert_eq!(h[13], "rho");
        assert_eq!(h.last().unwrap(), "events");
        assert!(h.contains(&"lidar_dsi".to_string()));
    }

    #[test]
    fn rejects_bad_rows() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[row(0.1), row(0.0)]).unwrap();
        assert!(read_trace(&buf[..]).is_err());
        let text = String::from_utf8(buf).unwrap().replacen("0.465", "abc", 1);
        assert!(read_trace(text.as_bytes()).is_err());
    }
}
