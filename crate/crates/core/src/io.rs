//! On-disk formats.
//!
//! * Raw trace: line-delimited JSON op stream, one alloc or free per line,
//!   optionally preceded by a `{"version":1,"format":"raw"}` header.
//! * Paired trace: header line carrying the horizon and schedules, then one
//!   fused event per line.
//! * Plan: a single JSON document with decisions and the reuse map.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::model::{
    align_up, layer_instance_name, LayerSpan, MemoryRequestEvent, PhaseId, PhaseSpan, Trace, DEFAULT_ALIGNMENT,
};
use crate::planner::StaticPlan;
use crate::reuse::{LayerKey, ReuseEntry, ReuseMap};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Alloc,
    Free,
}

/// One line of the raw profiler stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOpRecord {
    pub op: OpKind,
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    pub phase: PhaseId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub module: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dynamic: bool,
}

impl RawOpRecord {
    pub fn alloc(id: u64, size: u64, phase: PhaseId, module: impl Into<String>, dynamic: bool) -> Self {
        RawOpRecord {
            op: OpKind::Alloc,
            id,
            size: Some(size),
            phase,
            module: module.into(),
            dynamic,
        }
    }

    pub fn free(id: u64, phase: PhaseId, module: impl Into<String>) -> Self {
        RawOpRecord {
            op: OpKind::Free,
            id,
            size: None,
            phase,
            module: module.into(),
            dynamic: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawHeader {
    version: u64,
    #[serde(default)]
    format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairedHeader {
    version: u64,
    format: String,
    horizon: u64,
    phase_schedule: Vec<PhaseSpan>,
    layer_schedule: Vec<LayerSpan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairedRecord {
    id: u64,
    size: u64,
    t_s: u64,
    t_e: u64,
    p_s: PhaseId,
    p_e: PhaseId,
    dynamic: bool,
    l_s: Option<String>,
    l_e: Option<String>,
}

fn check_version(found: u64) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

/// Fuses a raw op stream into a validated [`Trace`].
///
/// Record `i` gets timestamp `i`. Allocations that are never freed become
/// persistent: `t_e = horizon` and `p_e` = last phase. Sizes are rounded up
/// to `alignment`. `lines` maps record index to source line for error
/// reporting; pass `None` to use 1-based record positions.
pub fn pair_records(records: &[RawOpRecord], alignment: u64, lines: Option<&[usize]>) -> Result<Trace> {
    let line_of = |i: usize| lines.map_or(i + 1, |l| l[i]);
    let horizon = records.len() as u64;

    let mut phase_schedule: Vec<PhaseSpan> = Vec::new();
    let mut seen_phases = HashSet::new();
    for (i, rec) in records.iter().enumerate() {
        if phase_schedule.last().map(|p| p.phase) != Some(rec.phase) {
            if !seen_phases.insert(rec.phase) {
                return Err(Error::malformed(
                    line_of(i),
                    format!("phase {} resumes after another phase started", rec.phase),
                ));
            }
            if let Some(last) = phase_schedule.last_mut() {
                last.end = i as u64;
            }
            phase_schedule.push(PhaseSpan {
                phase: rec.phase,
                start: i as u64,
                end: horizon,
            });
        }
    }
    let last_phase = phase_schedule.last().map(|p| p.phase);

    struct Open {
        idx: usize,
        size: u64,
        t_s: u64,
        phase: PhaseId,
        dynamic: bool,
        layer: Option<String>,
    }
    let mut open: HashMap<u64, Open> = HashMap::new();
    let mut seen_ids = HashSet::new();
    let mut events: Vec<(usize, MemoryRequestEvent)> = Vec::with_capacity(records.len() / 2 + 1);
    let mut layer_spans: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut touch_layer = |name: &String, ts: u64| {
        let span = layer_spans.entry(name.clone()).or_insert((ts, ts + 1));
        span.0 = span.0.min(ts);
        span.1 = span.1.max(ts + 1);
    };

    for (i, rec) in records.iter().enumerate() {
        let ts = i as u64;
        match rec.op {
            OpKind::Alloc => {
                let size = match rec.size {
                    Some(s) if s > 0 => align_up(s, alignment),
                    _ => return Err(Error::malformed(line_of(i), "alloc needs a positive size")),
                };
                if !seen_ids.insert(rec.id) {
                    return Err(Error::malformed(line_of(i), format!("duplicate alloc id {}", rec.id)));
                }
                let layer = if rec.dynamic {
                    if rec.module.is_empty() {
                        return Err(Error::malformed(line_of(i), "dynamic event missing layer"));
                    }
                    let name = layer_instance_name(&rec.module, rec.phase);
                    touch_layer(&name, ts);
                    Some(name)
                } else {
                    None
                };
                open.insert(
                    rec.id,
                    Open {
                        idx: i,
                        size,
                        t_s: ts,
                        phase: rec.phase,
                        dynamic: rec.dynamic,
                        layer,
                    },
                );
            }
            OpKind::Free => {
                let Some(alloc) = open.remove(&rec.id) else {
                    return Err(Error::malformed(
                        line_of(i),
                        format!("free without matching alloc (id {})", rec.id),
                    ));
                };
                let l_e = if alloc.dynamic {
                    if rec.module.is_empty() {
                        return Err(Error::malformed(line_of(i), "dynamic event missing layer"));
                    }
                    let name = layer_instance_name(&rec.module, rec.phase);
                    touch_layer(&name, ts);
                    Some(name)
                } else {
                    None
                };
                events.push((
                    alloc.idx,
                    MemoryRequestEvent {
                        id: rec.id,
                        size: alloc.size,
                        t_s: alloc.t_s,
                        t_e: ts,
                        p_s: alloc.phase,
                        p_e: rec.phase,
                        dynamic: alloc.dynamic,
                        l_s: alloc.layer,
                        l_e,
                    },
                ));
            }
        }
    }

    for (id, alloc) in open {
        if alloc.dynamic {
            return Err(Error::malformed(
                line_of(alloc.idx),
                format!("dynamic event {id} is never freed"),
            ));
        }
        events.push((
            alloc.idx,
            MemoryRequestEvent {
                id,
                size: alloc.size,
                t_s: alloc.t_s,
                t_e: horizon,
                p_s: alloc.phase,
                p_e: last_phase.expect("an alloc implies a phase"),
                dynamic: false,
                l_s: None,
                l_e: None,
            },
        ));
    }
    events.sort_unstable_by_key(|(idx, _)| *idx);

    let mut layer_schedule: Vec<LayerSpan> = layer_spans
        .into_iter()
        .map(|(name, (start, end))| LayerSpan { name, start, end })
        .collect();
    layer_schedule.sort_by(|a, b| (a.start, &a.name).cmp(&(b.start, &b.name)));

    let trace = Trace {
        horizon,
        events: events.into_iter().map(|(_, e)| e).collect(),
        phase_schedule,
        layer_schedule,
    };
    trace.validate()?;
    Ok(trace)
}

/// Inverse of [`pair_records`] for traces whose records form a dense stream.
pub fn trace_to_records(trace: &Trace) -> Result<Vec<RawOpRecord>> {
    let n = trace.horizon as usize;
    let mut slots: Vec<Option<RawOpRecord>> = vec![None; n];
    let module_of = |name: &Option<String>| -> String {
        name.as_deref()
            .map(|n| n.rsplit_once('@').map_or(n, |(m, _)| m).to_string())
            .unwrap_or_default()
    };
    let mut place = |ts: u64, rec: RawOpRecord| -> Result<()> {
        match slots.get_mut(ts as usize) {
            Some(slot @ None) => {
                *slot = Some(rec);
                Ok(())
            }
            _ => Err(Error::InvalidTrace(format!(
                "timestamp {ts} is not a free record slot; write the paired format instead"
            ))),
        }
    };
    for e in &trace.events {
        place(
            e.t_s,
            RawOpRecord::alloc(e.id, e.size, e.p_s, module_of(&e.l_s), e.dynamic),
        )?;
        if e.t_e < trace.horizon {
            place(e.t_e, RawOpRecord::free(e.id, e.p_e, module_of(&e.l_e)))?;
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(ts, r)| {
            r.ok_or_else(|| {
                Error::InvalidTrace(format!("timestamp {ts} has no record; write the paired format instead"))
            })
        })
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses a trace file in either the raw or the paired format.
pub fn parse_trace(path: impl AsRef<Path>) -> Result<Trace> {
    parse_trace_with_alignment(path, DEFAULT_ALIGNMENT)
}

pub fn parse_trace_with_alignment(path: impl AsRef<Path>, alignment: u64) -> Result<Trace> {
    let lines = read_lines(path.as_ref())?;
    parse_trace_lines(&lines, alignment)
}

pub fn parse_trace_str(text: &str, alignment: u64) -> Result<Trace> {
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    parse_trace_lines(&lines, alignment)
}

fn parse_trace_lines(lines: &[(usize, String)], alignment: u64) -> Result<Trace> {
    let mut body = lines;
    if let Some((line_no, first)) = lines.first() {
        let value: Value = serde_json::from_str(first).map_err(|e| Error::malformed(*line_no, e.to_string()))?;
        if value.get("version").is_some() && value.get("op").is_none() {
            let header: RawHeader =
                serde_json::from_value(value.clone()).map_err(|e| Error::malformed(*line_no, e.to_string()))?;
            check_version(header.version)?;
            match header.format.as_deref() {
                None | Some("raw") => body = &lines[1..],
                Some("paired") => return parse_paired(value, &lines[1..], *line_no),
                Some(other) => return Err(Error::malformed(*line_no, format!("unknown trace format {other:?}"))),
            }
        }
    }
    let mut records = Vec::with_capacity(body.len());
    let mut line_numbers = Vec::with_capacity(body.len());
    for (line_no, text) in body {
        let rec: RawOpRecord = serde_json::from_str(text).map_err(|e| Error::malformed(*line_no, e.to_string()))?;
        records.push(rec);
        line_numbers.push(*line_no);
    }
    pair_records(&records, alignment, Some(&line_numbers))
}

fn parse_paired(header: Value, body: &[(usize, String)], header_line: usize) -> Result<Trace> {
    let header: PairedHeader =
        serde_json::from_value(header).map_err(|e| Error::malformed(header_line, e.to_string()))?;
    let mut events = Vec::with_capacity(body.len());
    for (line_no, text) in body {
        let r: PairedRecord = serde_json::from_str(text).map_err(|e| Error::malformed(*line_no, e.to_string()))?;
        if r.dynamic && (r.l_s.is_none() || r.l_e.is_none()) {
            return Err(Error::malformed(*line_no, "dynamic event missing layer"));
        }
        events.push(MemoryRequestEvent {
            id: r.id,
            size: r.size,
            t_s: r.t_s,
            t_e: r.t_e,
            p_s: r.p_s,
            p_e: r.p_e,
            dynamic: r.dynamic,
            l_s: r.l_s,
            l_e: r.l_e,
        });
    }
    let trace = Trace {
        horizon: header.horizon,
        events,
        phase_schedule: header.phase_schedule,
        layer_schedule: header.layer_schedule,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the raw op-stream format.
pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records = trace_to_records(trace)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header = RawHeader {
        version: SCHEMA_VERSION,
        format: Some("raw".into()),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for rec in &records {
        writeln!(w, "{}", serde_json::to_string(rec).expect("record serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the paired-event format.
pub fn write_paired_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header = PairedHeader {
        version: SCHEMA_VERSION,
        format: "paired".into(),
        horizon: trace.horizon,
        phase_schedule: trace.phase_schedule.clone(),
        layer_schedule: trace.layer_schedule.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for e in &trace.events {
        let r = PairedRecord {
            id: e.id,
            size: e.size,
            t_s: e.t_s,
            t_e: e.t_e,
            p_s: e.p_s,
            p_e: e.p_e,
            dynamic: e.dynamic,
            l_s: e.l_s.clone(),
            l_e: e.l_e.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&r).expect("record serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// A decision as stored in the plan file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedBlock {
    pub id: u64,
    pub addr: u64,
    pub size: u64,
    pub t_s: u64,
    pub t_e: u64,
    /// Allocation phase, the runtime's matching key alongside `size`.
    pub p_s: PhaseId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReuseRecord {
    l_s: String,
    l_e: String,
    intervals: IntervalSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    version: u64,
    pool_size: u64,
    alignment: u64,
    decisions: Vec<PlannedBlock>,
    reuse_map: Vec<ReuseRecord>,
}

/// Everything the runtime needs: pool size, decisions and reuse map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBundle {
    pub pool_size: u64,
    pub alignment: u64,
    pub decisions: Vec<PlannedBlock>,
    pub reuse: ReuseMap,
}

impl PlanBundle {
    pub fn new(plan: &StaticPlan, reuse: ReuseMap) -> Self {
        PlanBundle {
            pool_size: plan.pool_size,
            alignment: plan.alignment,
            decisions: plan
                .decisions
                .iter()
                .map(|d| PlannedBlock {
                    id: d.event.id,
                    addr: d.addr,
                    size: d.event.size,
                    t_s: d.event.t_s,
                    t_e: d.event.t_e,
                    p_s: d.event.p_s,
                })
                .collect(),
            reuse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alignment == 0 {
            return Err(Error::InvalidPlan("alignment must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(self.decisions.len());
        for d in &self.decisions {
            if d.addr + d.size > self.pool_size {
                return Err(Error::InvalidPlan(format!("decision out of pool (id {})", d.id)));
            }
            if d.size == 0 || d.t_s >= d.t_e {
                return Err(Error::InvalidPlan(format!("decision {} is empty", d.id)));
            }
            if d.addr % self.alignment != 0 {
                return Err(Error::InvalidPlan(format!("decision {} is misaligned", d.id)));
            }
            if !ids.insert(d.id) {
                return Err(Error::InvalidPlan(format!("duplicate decision id {}", d.id)));
            }
        }
        for (key, entry) in &self.reuse.entries {
            if entry.space.iter().any(|iv| iv.hi > self.pool_size) {
                return Err(Error::InvalidPlan(format!("reuse space for {key} leaves the pool")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = PlanFile {
            version: SCHEMA_VERSION,
            pool_size: self.pool_size,
            alignment: self.alignment,
            decisions: self.decisions.clone(),
            reuse_map: self
                .reuse
                .entries
                .iter()
                .map(|(k, v)| ReuseRecord {
                    l_s: k.l_s.clone(),
                    l_e: k.l_e.clone(),
                    intervals: v.space.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("plan serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        if let Some(v) = value.get("version").and_then(Value::as_u64) {
            check_version(v)?;
        }
        let file: PlanFile = serde_json::from_value(value).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for r in file.reuse_map {
            let key = LayerKey::new(r.l_s, r.l_e);
            if entries.contains_key(&key) {
                return Err(Error::InvalidPlan(format!("duplicate reuse entry {key}")));
            }
            entries.insert(
                key,
                ReuseEntry {
                    window: None,
                    space: r.intervals,
                },
            );
        }
        let bundle = PlanBundle {
            pool_size: file.pool_size,
            alignment: file.alignment,
            decisions: file.decisions,
            reuse: ReuseMap { entries },
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn write_plan(bundle: &PlanBundle, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &bundle.to_json())
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<PlanBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PlanBundle::from_json(&text)
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path.as_ref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f0() -> PhaseId {
        PhaseId::forward(0, 0)
    }

    fn b0() -> PhaseId {
        PhaseId::backward(0, 0)
    }

    #[test]
    fn pairs_alloc_and_free() {
        let text = r#"{"op":"alloc","id":1,"size":1024,"phase":"F:0"}
{"op":"free","id":1,"phase":"B:0"}"#;
        let t = parse_trace_str(text, 512).unwrap();
        assert_eq!(t.events.len(), 1);
        let e = &t.events[0];
        assert_eq!(
            (e.size, e.t_s, e.t_e, e.p_s, e.p_e, e.dynamic),
            (1024, 0, 1, f0(), b0(), false)
        );
    }

    #[test]
    fn unfreed_alloc_is_persistent() {
        let mut recs = vec![RawOpRecord::alloc(7, 100, PhaseId::INIT, "w", false)];
        for i in 0..99 {
            recs.push(RawOpRecord::alloc(100 + i, 512, f0(), "", false));
        }
        // 99 filler records push the horizon to 100
        let t = pair_records(&recs, 512, None).unwrap();
        assert_eq!(t.horizon, 100);
        let e = t.events.iter().find(|e| e.id == 7).unwrap();
        assert_eq!(e.t_e, 100);
        assert_eq!(e.size, 512);
        assert_eq!(e.p_e, f0());
    }

    #[test]
    fn dynamic_without_module_is_rejected() {
        let text = r#"{"op":"alloc","id":1,"size":1024,"phase":"F:0","dynamic":true}"#;
        let err = parse_trace_str(text, 512).unwrap_err();
        assert!(err.to_string().contains("dynamic event missing layer"), "{err}");
    }

    #[test]
    fn reports_line_numbers() {
        let text = "{\"version\":1}\n{\"op\":\"alloc\",\"id\":1,\"size\":8,\"phase\":\"F:0\"}\nnot json\n";
        match parse_trace_str(text, 512).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "{\"op\":\"free\",\"id\":4,\"phase\":\"F:0\"}\n";
        let err = parse_trace_str(text, 512).unwrap_err();
        assert!(err.to_string().contains("line 1: free without matching alloc"), "{err}");
        let text = "{\"op\":\"alloc\",\"id\":4,\"size\":8,\"phase\":\"F:0\"}\n{\"op\":\"alloc\",\"id\":4,\"size\":8,\"phase\":\"F:0\"}\n";
        let err = parse_trace_str(text, 512).unwrap_err();
        assert!(err.to_string().contains("line 2: duplicate alloc id 4"), "{err}");
    }

    #[test]
    fn rejects_unknown_version() {
        let err = parse_trace_str("{\"version\":9}\n", 512).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { found: 9, .. }));
        let err = PlanBundle::from_json(r#"{"version":2,"pool_size":0,"alignment":512,"decisions":[],"reuse_map":[]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { found: 2, .. }));
    }

    #[test]
    fn interleaved_phase_is_rejected() {
        let recs = vec![
            RawOpRecord::alloc(1, 8, f0(), "", false),
            RawOpRecord::alloc(2, 8, b0(), "", false),
            RawOpRecord::alloc(3, 8, f0(), "", false),
        ];
        assert!(pair_records(&recs, 512, None).is_err());
    }

    #[test]
    fn layer_spans_cover_dynamic_records() {
        let recs = vec![
            RawOpRecord::alloc(1, 8, f0(), "l.0", false),
            RawOpRecord::alloc(2, 8, f0(), "moe", true),
            RawOpRecord::alloc(3, 8, f0(), "moe", true),
            RawOpRecord::free(2, f0(), "moe"),
            RawOpRecord::free(1, b0(), "l.0"),
            RawOpRecord::free(3, b0(), "moe"),
        ];
        let t = pair_records(&recs, 512, None).unwrap();
        assert_eq!(
            t.layer_schedule,
            vec![
                LayerSpan {
                    name: "moe@F:0".into(),
                    start: 1,
                    end: 4
                },
                LayerSpan {
                    name: "moe@B:0".into(),
                    start: 5,
                    end: 6
                },
            ]
        );
        let e3 = t.events.iter().find(|e| e.id == 3).unwrap();
        assert_eq!(e3.l_s.as_deref(), Some("moe@F:0"));
        assert_eq!(e3.l_e.as_deref(), Some("moe@B:0"));
        assert_eq!(trace_to_records(&t).unwrap().len(), 6);
    }

    #[test]
    fn empty_plan_file() {
        let bundle = PlanBundle {
            pool_size: 0,
            alignment: 512,
            decisions: vec![],
            reuse: ReuseMap::default(),
        };
        let text = bundle.to_json();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["pool_size"], 0);
        assert_eq!(v["decisions"].as_array().unwrap().len(), 0);
        assert_eq!(v["reuse_map"].as_array().unwrap().len(), 0);
        assert_eq!(PlanBundle::from_json(&text).unwrap(), bundle);
    }

    #[test]
    fn out_of_pool_decision_is_rejected() {
        let text = r#"{"version":1,"pool_size":1024,"alignment":512,
            "decisions":[{"id":1,"addr":1024,"size":512,"t_s":0,"t_e":1,"p_s":"init"}],"reuse_map":[]}"#;
        let err = PlanBundle::from_json(text).unwrap_err();
        assert!(err.to_string().contains("decision out of pool"), "{err}");
    }
}
