//! On-disk artifact formats. CSV files carry a header row, '.' decimals and
//! nine decimal places; an empty cell is a missing value. Every write goes
//! through a temporary file in the target directory and a rename.

use std::io::Write;
use std::path::Path;

use hazard_twin_core::district::{BuildingType, District, NodeRecord};
use hazard_twin_core::scenario::HazardTimeline;
use hazard_twin_core::sensing::StreamSet;
use hazard_twin_core::SeriesMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{TwinError, TwinResult};

pub const NODES: &str = "nodes.csv";
pub const TIME: &str = "time.csv";
pub const TRUTH: &str = "truth.csv";
pub const IOT: &str = "iot.csv";
pub const UAV: &str = "uav.csv";
pub const UAV_IDX: &str = "uav_idx.csv";
pub const SAT: &str = "sat.csv";
pub const SAT_IDX: &str = "sat_idx.csv";
pub const EQUITY_NODES: &str = "equity_per_node.csv";
pub const EQUITY_SUMMARY: &str = "equity_summary.json";

/// Formats a value for CSV; NaN becomes an empty cell.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        let s = format!("{v:.9}");
        if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
            s[1..].to_string()
        } else {
            s
        }
    }
}

pub fn parse_f64(cell: &str, path: &Path) -> TwinResult<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse().map_err(|_| TwinError::artifact(path, format!("not a number: {cell:?}")))
}

fn parse_usize(cell: &str, path: &Path) -> TwinResult<usize> {
    cell.trim().parse().map_err(|_| TwinError::artifact(path, format!("not an index: {cell:?}")))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> TwinResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| TwinError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| TwinError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| TwinError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| TwinError::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(|e| TwinError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| TwinError::io(path, e.error))?;
    Ok(())
}

pub fn write_csv<R, I>(path: &Path, header: &[String], rows: I) -> TwinResult<()>
where
    R: IntoIterator<Item = String>,
    I: IntoIterator<Item = R>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| TwinError::artifact(path, e);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| TwinError::artifact(path, e))?;
    write_atomic(path, &bytes)
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> TwinResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| TwinError::artifact(path, e))?;
    let header = r.headers().map_err(|e| TwinError::artifact(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| TwinError::artifact(path, e))?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> TwinResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| TwinError::artifact(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> TwinResult<T> {
    let bytes = std::fs::read(path).map_err(|e| TwinError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| TwinError::artifact(path, e))
}

pub fn sha256_file(path: &Path) -> TwinResult<String> {
    let bytes = std::fs::read(path).map_err(|e| TwinError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> TwinResult<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a != b) {
        return Err(TwinError::artifact(path, format!("expected header {}", want.join(","))));
    }
    Ok(())
}

const NODE_HEADER: [&str; 10] = ["id", "x", "y", "type", "pop", "income", "energy_burden", "vuln", "has_sensor", "req"];

pub fn write_nodes(path: &Path, district: &District) -> TwinResult<()> {
    let rows = district.nodes.iter().map(|n| {
        vec![
            n.id.to_string(),
            fmt(n.x),
            fmt(n.y),
            n.btype.token().to_string(),
            n.pop.to_string(),
            fmt(n.income),
            fmt(n.energy_burden),
            fmt(n.vuln),
            u8::from(n.has_sensor).to_string(),
            fmt(n.req),
        ]
    });
    write_csv(path, &header(&NODE_HEADER), rows)
}

/// Reads `nodes.csv`; the district seed is not stored and comes back as 0.
pub fn read_nodes(path: &Path) -> TwinResult<District> {
    let (head, rows) = read_csv(path)?;
    expect_header(path, &head, &NODE_HEADER)?;
    let mut nodes = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let id = parse_usize(&r[0], path)?;
        if id != i {
            return Err(TwinError::artifact(path, format!("row {i} has id {id}; ids must be 0..N in order")));
        }
        let btype = BuildingType::from_token(r[3].trim())
            .ok_or_else(|| TwinError::artifact(path, format!("unknown building type {:?}", r[3])))?;
        let pop = r[4].trim().parse().map_err(|_| TwinError::artifact(path, format!("bad population {:?}", r[4])))?;
        let has_sensor = match r[8].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(TwinError::artifact(path, format!("bad has_sensor {other:?}"))),
        };
        nodes.push(NodeRecord {
            id,
            x: parse_f64(&r[1], path)?,
            y: parse_f64(&r[2], path)?,
            btype,
            pop,
            income: parse_f64(&r[5], path)?,
            energy_burden: parse_f64(&r[6], path)?,
            vuln: parse_f64(&r[7], path)?,
            has_sensor,
            req: parse_f64(&r[9], path)?,
        });
    }
    Ok(District { nodes, seed: 0 })
}

const TIME_HEADER: [&str; 5] = ["t_index", "time_h", "T_out", "outage", "smoke"];

pub fn write_timeline(path: &Path, timeline: &HazardTimeline) -> TwinResult<()> {
    let rows = (0..timeline.len()).map(|k| {
        vec![
            k.to_string(),
            fmt(timeline.t_h[k]),
            fmt(timeline.t_out[k]),
            (timeline.outage[k] as u8).to_string(),
            fmt(timeline.smoke[k]),
        ]
    });
    write_csv(path, &header(&TIME_HEADER), rows)
}

/// Reads `time.csv`. The step is recovered from the first two rows to the
/// nearest micro-minute, or taken as 10 min for a single-row file.
pub fn read_timeline(path: &Path) -> TwinResult<HazardTimeline> {
    let (head, rows) = read_csv(path)?;
    expect_header(path, &head, &TIME_HEADER)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for r in &rows {
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse_f64(&r[c + 1], path)?);
        }
    }
    let [t_h, t_out, outage, smoke] = cols;
    let dt_h = match t_h.as_slice() {
        [a, b, ..] => ((b - a) * 60.0 * 1e6).round() / 1e6 / 60.0,
        _ => 10.0 / 60.0,
    };
    Ok(HazardTimeline::new(dt_h, t_h, t_out, outage, smoke)?)
}

/// Writes a time-major table: one row per step, one column per node.
pub fn write_time_by_node(path: &Path, m: &SeriesMatrix) -> TwinResult<()> {
    let mut head = vec!["t_index".to_string()];
    head.extend((0..m.rows()).map(|n| format!("n{n}")));
    let rows = (0..m.cols()).map(|t| std::iter::once(t.to_string()).chain((0..m.rows()).map(move |n| fmt(m.get(n, t)))));
    write_csv(path, &head, rows)
}

/// Reads a table written by [`write_time_by_node`] back into node-major form.
pub fn read_time_by_node(path: &Path) -> TwinResult<SeriesMatrix> {
    let (head, rows) = read_csv(path)?;
    let n = head.len().saturating_sub(1);
    let mut m = SeriesMatrix::missing(n, rows.len());
    for (t, r) in rows.iter().enumerate() {
        for node in 0..n {
            m.set(node, t, parse_f64(&r[node + 1], path)?);
        }
    }
    Ok(m)
}

/// Writes a node-major table whose columns are labelled by time index.
pub fn write_node_by_time(path: &Path, m: &SeriesMatrix, t_index: &[usize]) -> TwinResult<()> {
    let mut head = vec!["node".to_string()];
    head.extend(t_index.iter().map(|t| t.to_string()));
    let rows = (0..m.rows()).map(|n| std::iter::once(n.to_string()).chain(m.row(n).iter().map(|v| fmt(*v))));
    write_csv(path, &head, rows)
}

pub fn read_node_by_time(path: &Path) -> TwinResult<SeriesMatrix> {
    let (_, rows) = read_csv(path)?;
    let data = rows
        .iter()
        .map(|r| r[1..].iter().map(|c| parse_f64(c, path)).collect::<TwinResult<Vec<f64>>>())
        .collect::<TwinResult<Vec<_>>>()?;
    if data.is_empty() {
        return Ok(SeriesMatrix::missing(0, 0));
    }
    Ok(SeriesMatrix::from_rows(data)?)
}

pub fn write_index(path: &Path, idx: &[usize]) -> TwinResult<()> {
    write_csv(path, &header(&["column", "t_index"]), idx.iter().enumerate().map(|(c, t)| [c.to_string(), t.to_string()]))
}

pub fn read_index(path: &Path) -> TwinResult<Vec<usize>> {
    let (_, rows) = read_csv(path)?;
    rows.iter().map(|r| parse_usize(&r[1], path)).collect()
}

pub fn write_streams(dir: &Path, streams: &StreamSet) -> TwinResult<()> {
    let dense: Vec<usize> = (0..streams.iot.cols()).collect();
    write_node_by_time(&dir.join(IOT), &streams.iot, &dense)?;
    write_node_by_time(&dir.join(UAV), &streams.uav, &streams.uav_idx)?;
    write_index(&dir.join(UAV_IDX), &streams.uav_idx)?;
    write_node_by_time(&dir.join(SAT), &streams.sat, &streams.sat_idx)?;
    write_index(&dir.join(SAT_IDX), &streams.sat_idx)
}

pub fn read_streams(dir: &Path, sigmas: [f64; 3]) -> TwinResult<StreamSet> {
    let streams = StreamSet {
        iot: read_node_by_time(&dir.join(IOT))?,
        uav: read_node_by_time(&dir.join(UAV))?,
        uav_idx: read_index(&dir.join(UAV_IDX))?,
        sat: read_node_by_time(&dir.join(SAT))?,
        sat_idx: read_index(&dir.join(SAT_IDX))?,
        sigmas,
    };
    streams.validate()?;
    Ok(streams)
}
