//! Endpoints: sources and destinations of fragments.
//!
//! Datasets come in two pinned formats. `DelimitedText` is RFC-style CSV
//! with a typed header: the two leading columns `_seq,_time` carry the
//! fragment sequence and event time, every payload column is `name:kind`
//! with kind one of int/num/text/bool/time. `RecordLines` is one canonical
//! fragment per line. Both round-trip bit-exactly. Sinks append in arrival
//! order; sources stream (no whole-file loads) and stamp `source_seq`
//! 0..n-1, rejecting rows that fail the schema with a count rather than
//! aborting.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;

use crate::fragment::Fragment;
use crate::value::{Value, ValueKind};

#[derive(Debug, thiserror::Error)]
pub enum EndpointError {
    #[error("cannot open `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch in `{path}`: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("plot window [{i}, {j}] exceeds available samples ({available})")]
    WindowOutOfRange { i: u64, j: u64, available: u64 },
    #[error("plot window [{i}, {j}] is inverted")]
    InvertedWindow { i: u64, j: u64 },
    #[error("source sequence regressed: {prev} then {next}")]
    SequenceRegression { prev: u64, next: u64 },
    #[error("event time regressed within one source: {prev} then {next}")]
    TimeRegression { prev: i64, next: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    DelimitedText,
    RecordLines,
}

impl DatasetFormat {
    /// Extension-based detection: `.csv` is delimited text, everything else
    /// record lines.
    pub fn infer(path: &Path) -> DatasetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::DelimitedText,
            _ => DatasetFormat::RecordLines,
        }
    }
}

/// A file-backed dataset endpoint description.
#[derive(Debug, Clone)]
pub struct DatasetEndpoint {
    pub location: PathBuf,
    pub format: DatasetFormat,
}

impl DatasetEndpoint {
    pub fn new(location: impl Into<PathBuf>) -> DatasetEndpoint {
        let location = location.into();
        DatasetEndpoint {
            format: DatasetFormat::infer(&location),
            location,
        }
    }
}

// ---------------------------------------------------------------------------
// Sources
// ---------------------------------------------------------------------------

/// Streaming fragment producer. `next` returns `Ok(None)` at end of input;
/// schema-rejected rows are counted and skipped.
pub trait FragmentSource: Send {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError>;
    fn rejected(&self) -> u64;
}

/// In-memory source for tests and generated feeds. Enforces the fragment
/// invariants: strictly increasing seq, nondecreasing event time.
pub struct VecSource {
    items: std::vec::IntoIter<Fragment>,
    last: Option<(u64, i64)>,
}

impl VecSource {
    pub fn new(items: Vec<Fragment>) -> VecSource {
        VecSource {
            items: items.into_iter(),
            last: None,
        }
    }
}

impl FragmentSource for VecSource {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError> {
        match self.items.next() {
            None => Ok(None),
            Some(frag) => {
                if let Some((seq, time)) = self.last {
                    if frag.source_seq <= seq {
                        return Err(EndpointError::SequenceRegression {
                            prev: seq,
                            next: frag.source_seq,
                        });
                    }
                    if frag.event_time < time {
                        return Err(EndpointError::TimeRegression {
                            prev: time,
                            next: frag.event_time,
                        });
                    }
                }
                self.last = Some((frag.source_seq, frag.event_time));
                Ok(Some(frag))
            }
        }
    }

    fn rejected(&self) -> u64 {
        0
    }
}

/// Opens a dataset as a streaming source.
pub fn open_source(endpoint: &DatasetEndpoint) -> Result<Box<dyn FragmentSource>, EndpointError> {
    let file = File::open(&endpoint.location).map_err(|e| EndpointError::Io {
        path: endpoint.location.clone(),
        source: e,
    })?;
    match endpoint.format {
        DatasetFormat::DelimitedText => Ok(Box::new(CsvSource::new(file, &endpoint.location)?)),
        DatasetFormat::RecordLines => Ok(Box::new(RecordLinesSource {
            reader: BufReader::new(file),
            path: endpoint.location.clone(),
            next_seq: 0,
            rejected: 0,
        })),
    }
}

struct CsvSource {
    reader: csv::Reader<File>,
    /// (name, kind) per payload column, plus positions of _seq/_time.
    columns: Vec<(String, ValueKind)>,
    seq_col: Option<usize>,
    time_col: Option<usize>,
    next_seq: u64,
    last_time: Option<i64>,
    rejected: u64,
}

impl CsvSource {
    fn new(file: File, path: &Path) -> Result<CsvSource, EndpointError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| EndpointError::Schema {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?
            .clone();
        let mut columns = Vec::new();
        let mut seq_col = None;
        let mut time_col = None;
        for (i, h) in headers.iter().enumerate() {
            if h == "_seq" {
                seq_col = Some(i);
                columns.push((h.to_string(), ValueKind::Int));
            } else if h == "_time" {
                time_col = Some(i);
                columns.push((h.to_string(), ValueKind::Int));
            } else if let Some((name, kind)) = h.rsplit_once(':') {
                let kind = ValueKind::parse_name(kind).map_err(|_| EndpointError::Schema {
                    path: path.to_path_buf(),
                    detail: format!("unknown column kind in header `{h}`"),
                })?;
                columns.push((name.to_string(), kind));
            } else {
                // untyped header column: default to num
                columns.push((h.to_string(), ValueKind::Num));
            }
        }
        Ok(CsvSource {
            reader,
            columns,
            seq_col,
            time_col,
            next_seq: 0,
            last_time: None,
            rejected: 0,
        })
    }
}

impl FragmentSource for CsvSource {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(None),
                Ok(true) => {}
                Err(_) => {
                    self.rejected += 1;
                    continue;
                }
            }
            match self.parse_row(&record) {
                Ok(frag) => return Ok(Some(frag)),
                Err(RowError::Reject) => {
                    self.rejected += 1;
                    continue;
                }
                Err(RowError::Fatal(e)) => return Err(e),
            }
        }
    }

    fn rejected(&self) -> u64 {
        self.rejected
    }
}

enum RowError {
    Reject,
    Fatal(EndpointError),
}

impl CsvSource {
    fn parse_row(&mut self, record: &csv::StringRecord) -> Result<Fragment, RowError> {
        if record.len() != self.columns.len() {
            return Err(RowError::Reject);
        }
        let mut payload = IndexMap::new();
        let mut seq = self.next_seq;
        let mut time = self.next_seq as i64;
        for (i, (name, kind)) in self.columns.iter().enumerate() {
            let cell = record.get(i).unwrap_or("");
            if Some(i) == self.seq_col {
                seq = cell.parse().map_err(|_| RowError::Reject)?;
                continue;
            }
            if Some(i) == self.time_col {
                time = cell.parse().map_err(|_| RowError::Reject)?;
                continue;
            }
            let value = Value::parse_cell(*kind, cell).map_err(|_| RowError::Reject)?;
            payload.insert(name.clone(), value);
        }
        if self.seq_col.is_some() {
            if seq < self.next_seq {
                return Err(RowError::Fatal(EndpointError::SequenceRegression {
                    prev: self.next_seq,
                    next: seq,
                }));
            }
        }
        if let Some(last) = self.last_time {
            if time < last {
                return Err(RowError::Fatal(EndpointError::TimeRegression {
                    prev: last,
                    next: time,
                }));
            }
        }
        self.next_seq = seq + 1;
        self.last_time = Some(time);
        Ok(Fragment {
            payload,
            event_time: time,
            source_seq: seq,
        })
    }
}

struct RecordLinesSource {
    reader: BufReader<File>,
    path: PathBuf,
    next_seq: u64,
    rejected: u64,
}

impl FragmentSource for RecordLinesSource {
    fn next(&mut self) -> Result<Option<Fragment>, EndpointError> {
        let mut line = String::new();
        loop {
            line.clear();
            let n = self
                .reader
                .read_line(&mut line)
                .map_err(|e| EndpointError::Io {
                    path: self.path.clone(),
                    source: e,
                })?;
            if n == 0 {
                return Ok(None);
            }
            let trimmed = line.trim_end_matches('\n');
            if trimmed.is_empty() {
                continue;
            }
            match Fragment::parse_canonical(trimmed) {
                Ok(frag) => {
                    self.next_seq = frag.source_seq + 1;
                    return Ok(Some(frag));
                }
                Err(_) => {
                    self.rejected += 1;
                    continue;
                }
            }
        }
    }

    fn rejected(&self) -> u64 {
        self.rejected
    }
}

// ---------------------------------------------------------------------------
// Sinks
// ---------------------------------------------------------------------------

/// Fragment consumer. One writer per sink; the runtime shares sinks across
/// branches by wrapping them in a mutex.
pub trait FragmentSink: Send {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError>;
    fn finish(&mut self) -> Result<(), EndpointError>;
    fn written(&self) -> u64;
}

/// Collects fragments in memory; the workhorse test sink.
#[derive(Default)]
pub struct VecSink {
    pub items: Vec<Fragment>,
}

impl VecSink {
    pub fn new() -> VecSink {
        VecSink { items: Vec::new() }
    }
}

impl FragmentSink for VecSink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        self.items.push(frag.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        Ok(())
    }

    fn written(&self) -> u64 {
        self.items.len() as u64
    }
}

/// Opens a dataset for appending fragments, creating parent directories.
pub fn open_sink(endpoint: &DatasetEndpoint) -> Result<Box<dyn FragmentSink>, EndpointError> {
    if let Some(parent) = endpoint.location.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| EndpointError::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    let file = File::create(&endpoint.location).map_err(|e| EndpointError::Io {
        path: endpoint.location.clone(),
        source: e,
    })?;
    match endpoint.format {
        DatasetFormat::DelimitedText => Ok(Box::new(CsvSink {
            writer: Some(csv::Writer::from_writer(BufWriter::new(file))),
            path: endpoint.location.clone(),
            columns: None,
            written: 0,
        })),
        DatasetFormat::RecordLines => Ok(Box::new(RecordLinesSink {
            writer: BufWriter::new(file),
            path: endpoint.location.clone(),
            written: 0,
        })),
    }
}

struct CsvSink {
    writer: Option<csv::Writer<BufWriter<File>>>,
    path: PathBuf,
    /// Pinned on the first fragment: payload field order defines columns.
    columns: Option<Vec<(String, ValueKind)>>,
    written: u64,
}

impl CsvSink {
    fn io_err(&self, e: csv::Error) -> EndpointError {
        EndpointError::Schema {
            path: self.path.clone(),
            detail: e.to_string(),
        }
    }
}

impl FragmentSink for CsvSink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        if self.columns.is_none() {
            let columns: Vec<(String, ValueKind)> = frag
                .payload
                .iter()
                .map(|(name, value)| (name.clone(), ValueKind::of(value)))
                .collect();
            let mut header = vec!["_seq".to_string(), "_time".to_string()];
            header.extend(columns.iter().map(|(n, k)| format!("{n}:{}", k.name())));
            let w = self.writer.as_mut().expect("open sink");
            w.write_record(&header).map_err(|e| EndpointError::Schema {
                path: self.path.clone(),
                detail: e.to_string(),
            })?;
            self.columns = Some(columns);
        }
        let columns = self.columns.as_ref().unwrap().clone();
        let mut row = vec![frag.source_seq.to_string(), frag.event_time.to_string()];
        for (name, kind) in &columns {
            let value = frag.get(name).ok_or_else(|| EndpointError::Schema {
                path: self.path.clone(),
                detail: format!("fragment missing column `{name}`"),
            })?;
            if ValueKind::of(value) != *kind {
                return Err(EndpointError::Schema {
                    path: self.path.clone(),
                    detail: format!(
                        "column `{name}` expects {}, fragment carries {}",
                        kind.name(),
                        value.kind()
                    ),
                });
            }
            row.push(value.cell_text());
        }
        let w = self.writer.as_mut().expect("open sink");
        w.write_record(&row).map_err(|e| self.io_err(e))?;
        self.written += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        if let Some(mut w) = self.writer.take() {
            w.flush().map_err(|e| EndpointError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        }
        Ok(())
    }

    fn written(&self) -> u64 {
        self.written
    }
}

struct RecordLinesSink {
    writer: BufWriter<File>,
    path: PathBuf,
    written: u64,
}

impl FragmentSink for RecordLinesSink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        writeln!(self.writer, "{}", frag.canonical()).map_err(|e| EndpointError::Io {
            path: self.path.clone(),
            source: e,
        })?;
        self.written += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        self.writer.flush().map_err(|e| EndpointError::Io {
            path: self.path.clone(),
            source: e,
        })
    }

    fn written(&self) -> u64 {
        self.written
    }
}

/// Collecting sink whose contents stay readable after the run through a
/// shared handle.
pub struct MemorySink {
    data: Arc<Mutex<Vec<Fragment>>>,
}

pub type MemoryHandle = Arc<Mutex<Vec<Fragment>>>;

impl MemorySink {
    pub fn new() -> (MemorySink, MemoryHandle) {
        let data = Arc::new(Mutex::new(Vec::new()));
        (MemorySink { data: data.clone() }, data)
    }
}

impl FragmentSink for MemorySink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        self.data.lock().expect("memory sink").push(frag.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        Ok(())
    }

    fn written(&self) -> u64 {
        self.data.lock().expect("memory sink").len() as u64
    }
}

/// Shares one sink between writers (branches appending to a common file).
#[derive(Clone)]
pub struct SharedSink(Arc<Mutex<Box<dyn FragmentSink>>>);

impl SharedSink {
    pub fn new(sink: Box<dyn FragmentSink>) -> SharedSink {
        SharedSink(Arc::new(Mutex::new(sink)))
    }
}

impl FragmentSink for SharedSink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        self.0.lock().expect("sink lock").accept(frag)
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        self.0.lock().expect("sink lock").finish()
    }

    fn written(&self) -> u64 {
        self.0.lock().expect("sink lock").written()
    }
}

// ---------------------------------------------------------------------------
// Plots and animations
// ---------------------------------------------------------------------------

/// Static plot: a constant window `[i, j]` over `source_seq` with selected
/// series. Emits a data file plus a small declarative plot-spec file;
/// rendering is a consumer concern.
#[derive(Debug, Clone)]
pub struct PlotEndpoint {
    pub window: (u64, u64),
    pub series: Vec<String>,
    pub location: PathBuf,
}

/// Writes the plot data for a completed run's fragments. The data file holds
/// exactly `j - i + 1` rows ordered by `source_seq`; the sibling `.plot`
/// file records window and series.
pub fn plot_emit(endpoint: &PlotEndpoint, fragments: &[Fragment]) -> Result<(), EndpointError> {
    let (i, j) = endpoint.window;
    if i > j {
        return Err(EndpointError::InvertedWindow { i, j });
    }
    let mut rows: Vec<&Fragment> = fragments
        .iter()
        .filter(|f| f.source_seq >= i && f.source_seq <= j)
        .collect();
    rows.sort_by_key(|f| f.source_seq);
    let expected = j - i + 1;
    if rows.len() as u64 != expected {
        return Err(EndpointError::WindowOutOfRange {
            i,
            j,
            available: fragments.len() as u64,
        });
    }
    if let Some(parent) = endpoint.location.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| EndpointError::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    let mut data = String::new();
    data.push_str("_seq");
    for s in &endpoint.series {
        data.push(',');
        data.push_str(s);
    }
    data.push('\n');
    for frag in rows {
        data.push_str(&frag.source_seq.to_string());
        for s in &endpoint.series {
            data.push(',');
            if let Some(v) = frag.get(s) {
                data.push_str(&v.cell_text());
            }
        }
        data.push('\n');
    }
    fs::write(&endpoint.location, data).map_err(|e| EndpointError::Io {
        path: endpoint.location.clone(),
        source: e,
    })?;
    let spec_path = endpoint.location.with_extension("plot");
    let spec = format!(
        "plot window=[{i},{j}] series=[{}]\n",
        endpoint.series.join(",")
    );
    fs::write(&spec_path, spec).map_err(|e| EndpointError::Io {
        path: spec_path,
        source: e,
    })?;
    Ok(())
}

/// Animation endpoint: a mutable sliding window emitted as numbered frame
/// files. Frame `f` holds the most recent `min(w, seen)` fragments.
#[derive(Debug, Clone)]
pub struct AnimationEndpoint {
    pub window: usize,
    /// Emit a frame every `cadence` fragments.
    pub cadence: u64,
    pub directory: PathBuf,
}

/// Sink adapter that tees fragments into animation frames.
pub struct AnimationSink {
    endpoint: AnimationEndpoint,
    buffer: std::collections::VecDeque<Fragment>,
    seen: u64,
    frames: u64,
}

impl AnimationSink {
    pub fn new(endpoint: AnimationEndpoint) -> Result<AnimationSink, EndpointError> {
        assert!(endpoint.window >= 1, "animation window must be >= 1");
        fs::create_dir_all(&endpoint.directory).map_err(|e| EndpointError::Io {
            path: endpoint.directory.clone(),
            source: e,
        })?;
        Ok(AnimationSink {
            endpoint,
            buffer: std::collections::VecDeque::new(),
            seen: 0,
            frames: 0,
        })
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    fn emit_frame(&mut self) -> Result<(), EndpointError> {
        let path = self
            .endpoint
            .directory
            .join(format!("frame_{:06}.rl", self.frames));
        let mut body = String::new();
        for frag in &self.buffer {
            body.push_str(&frag.canonical());
            body.push('\n');
        }
        fs::write(&path, body).map_err(|e| EndpointError::Io {
            path,
            source: e,
        })?;
        self.frames += 1;
        Ok(())
    }
}

impl FragmentSink for AnimationSink {
    fn accept(&mut self, frag: &Fragment) -> Result<(), EndpointError> {
        self.buffer.push_back(frag.clone());
        while self.buffer.len() > self.endpoint.window {
            self.buffer.pop_front();
        }
        self.seen += 1;
        if self.seen % self.endpoint.cadence == 0 {
            self.emit_frame()?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), EndpointError> {
        if self.seen % self.endpoint.cadence != 0 {
            self.emit_frame()?;
        }
        Ok(())
    }

    fn written(&self) -> u64 {
        self.seen
    }
}
