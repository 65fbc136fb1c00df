//! Event data model, the `.fevt` binary stream format, CSV interchange and
//! fixed-width frame partitioning.
//!
//! A `.fevt` file is a 34-byte little-endian header followed by 13-byte
//! records:
//!
//! ```text
//! magic "FEVT" | version u16 | width u16 | height u16 | count u64 | t_start u64 | t_end u64
//! t u64 | x u16 | y u16 | polarity u8 (1 = positive, 0 = negative)
//! ```
//!
//! Timestamps are integer microseconds. The stream spans the half-open
//! interval `[t_start, t_end)`.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FEVT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 34;
pub const RECORD_LEN: usize = 13;

pub const DEFAULT_SENSOR_WIDTH: u16 = 1280;
pub const DEFAULT_SENSOR_HEIGHT: u16 = 720;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("event {index} out of bounds: {reason}")]
    OutOfBoundsEvent { index: usize, reason: String },
    #[error("event {index} at t={t} precedes previous timestamp {prev}")]
    UnsortedStream { index: usize, prev: u64, t: u64 },
    #[error("frame window must be at least 1 µs")]
    ZeroWindow,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = EventError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    #[inline]
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Positive => Polarity::Negative,
        }
    }
}

/// One asynchronous camera event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    /// Microseconds since stream start.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    #[inline]
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub sensor_width: u16,
    pub sensor_height: u16,
    pub t_start: u64,
    pub t_end: u64,
    pub event_count: u64,
}

impl StreamHeader {
    /// Header for `events` on the default 1280×720 sensor, spanning from 0 to
    /// one microsecond past the last event.
    pub fn for_events(events: &[Event]) -> Self {
        Self {
            sensor_width: DEFAULT_SENSOR_WIDTH,
            sensor_height: DEFAULT_SENSOR_HEIGHT,
            t_start: 0,
            t_end: events.last().map_or(0, |e| e.t + 1),
            event_count: events.len() as u64,
        }
    }

    pub fn span_us(&self) -> u64 {
        self.t_end - self.t_start
    }

    fn validate(&self) -> Result<()> {
        if self.t_end < self.t_start {
            return Err(EventError::MalformedHeader(format!(
                "t_end {} precedes t_start {}",
                self.t_end, self.t_start
            )));
        }
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(EventError::MalformedHeader("zero sensor geometry".into()));
        }
        Ok(())
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sensor_width.to_le_bytes());
        out.extend_from_slice(&self.sensor_height.to_le_bytes());
        out.extend_from_slice(&self.event_count.to_le_bytes());
        out.extend_from_slice(&self.t_start.to_le_bytes());
        out.extend_from_slice(&self.t_end.to_le_bytes());
    }

    /// Parses the fixed-size header at the start of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(EventError::MalformedHeader(format!(
                "need {HEADER_LEN} header bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(EventError::MalformedHeader("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(EventError::MalformedHeader(format!("unsupported version {version}")));
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let header = Self {
            sensor_width: u16::from_le_bytes([bytes[6], bytes[7]]),
            sensor_height: u16::from_le_bytes([bytes[8], bytes[9]]),
            event_count: u64_at(10),
            t_start: u64_at(18),
            t_end: u64_at(26),
        };
        header.validate()?;
        Ok(header)
    }
}

/// Checks sort order and geometry of `events` against `header`.
pub fn validate_events(header: &StreamHeader, events: &[Event]) -> Result<()> {
    header.validate()?;
    if header.event_count != events.len() as u64 {
        return Err(EventError::MalformedHeader(format!(
            "header declares {} events, found {}",
            header.event_count,
            events.len()
        )));
    }
    let mut prev = header.t_start;
    for (index, e) in events.iter().enumerate() {
        check_event(header, index, e, prev)?;
        prev = e.t;
    }
    Ok(())
}

#[inline]
fn check_event(header: &StreamHeader, index: usize, e: &Event, prev: u64) -> Result<()> {
    if e.x >= header.sensor_width || e.y >= header.sensor_height {
        return Err(EventError::OutOfBoundsEvent {
            index,
            reason: format!(
                "({}, {}) outside {}x{} sensor",
                e.x, e.y, header.sensor_width, header.sensor_height
            ),
        });
    }
    if e.t >= header.t_end || e.t < header.t_start {
        return Err(EventError::OutOfBoundsEvent {
            index,
            reason: format!("t={} outside [{}, {})", e.t, header.t_start, header.t_end),
        });
    }
    if index > 0 && e.t < prev {
        return Err(EventError::UnsortedStream { index, prev, t: e.t });
    }
    Ok(())
}

/// A validated, immutable event stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    header: StreamHeader,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(header: StreamHeader, events: Vec<Event>) -> Result<Self> {
        validate_events(&header, &events)?;
        Ok(Self { header, events })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_parts(self) -> (StreamHeader, Vec<Event>) {
        (self.header, self.events)
    }

    /// Events with `t0 <= t < t1`.
    pub fn window(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }

    pub fn frames(&self, window_us: u64) -> Result<FrameIter<'_>> {
        partition_into_frames(&self.header, &self.events, window_us)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_unchecked(&self.header, &self.events)
    }
}

fn encode_unchecked(header: &StreamHeader, events: &[Event]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * events.len());
    header.encode(&mut out);
    for e in events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.bit());
    }
    out
}

/// Serializes a stream to `.fevt` bytes after validating it.
pub fn write_event_stream(header: &StreamHeader, events: &[Event]) -> Result<Vec<u8>> {
    validate_events(header, events)?;
    Ok(encode_unchecked(header, events))
}

pub fn write_event_file(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&stream.to_bytes())?;
    w.flush()?;
    Ok(())
}

/// Decodes one 13-byte record.
#[inline]
pub fn decode_record(rec: &[u8]) -> Option<Event> {
    let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
    let x = u16::from_le_bytes([rec[8], rec[9]]);
    let y = u16::from_le_bytes([rec[10], rec[11]]);
    Polarity::from_bit(rec[12]).map(|polarity| Event { t, x, y, polarity })
}

/// Parses a complete `.fevt` byte sequence.
pub fn read_event_stream(bytes: &[u8]) -> Result<EventStream> {
    let header = StreamHeader::decode(bytes)?;
    let body = &bytes[HEADER_LEN..];
    let expected = (header.event_count as usize)
        .checked_mul(RECORD_LEN)
        .ok_or_else(|| EventError::MalformedHeader("event count overflows".into()))?;
    if body.len() != expected {
        return Err(EventError::MalformedHeader(format!(
            "header declares {} records ({} bytes), body has {} bytes",
            header.event_count,
            expected,
            body.len()
        )));
    }
    let mut events = Vec::with_capacity(header.event_count as usize);
    let mut prev = header.t_start;
    for (index, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let e = decode_record(rec).ok_or_else(|| {
            EventError::MalformedHeader(format!("record {index} has invalid polarity byte"))
        })?;
        check_event(&header, index, &e, prev)?;
        prev = e.t;
        events.push(e);
    }
    Ok(EventStream { header, events })
}

pub fn read_event_file(path: impl AsRef<Path>) -> Result<EventStream> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_event_stream(&bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    t_us: u64,
    x: u16,
    y: u16,
    p: u8,
}

/// Reads `t_us,x,y,p` CSV. The CSV carries no geometry, so the default sensor
/// is assumed and the span runs from 0 to one past the last event.
pub fn read_csv(reader: impl Read) -> Result<EventStream> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut events = Vec::new();
    for (index, rec) in rdr.deserialize::<CsvRecord>().enumerate() {
        let rec = rec?;
        let polarity = Polarity::from_bit(rec.p).ok_or_else(|| EventError::OutOfBoundsEvent {
            index,
            reason: format!("polarity {} is not 0 or 1", rec.p),
        })?;
        events.push(Event::new(rec.t_us, rec.x, rec.y, polarity));
    }
    let header = StreamHeader::for_events(&events);
    EventStream::new(header, events)
}

pub fn write_csv(writer: impl Write, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(CsvRecord { t_us: e.t, x: e.x, y: e.y, p: e.polarity.bit() })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `.fevt` or, by extension, `.csv`.
pub fn read_any(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    match path.extension().and_then(|s| s.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(File::open(path)?),
        _ => read_event_file(path),
    }
}

/// All events in one half-open window `[window_start, window_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFrame<'a> {
    pub index: usize,
    pub window_start: u64,
    pub window_end: u64,
    pub events: &'a [Event],
}

impl EventFrame<'_> {
    pub fn midpoint(&self) -> u64 {
        self.window_start + (self.window_end - self.window_start) / 2
    }
}

/// Splits a stream into contiguous windows `[t_start + k·w, t_start + (k+1)·w)`
/// covering the header span. Empty windows are yielded too.
pub fn partition_into_frames<'a>(
    header: &StreamHeader,
    events: &'a [Event],
    window_us: u64,
) -> Result<FrameIter<'a>> {
    if window_us == 0 {
        return Err(EventError::ZeroWindow);
    }
    let t_end = header.t_end.max(events.last().map_or(0, |e| e.t + 1));
    let frame_count = (t_end.saturating_sub(header.t_start)).div_ceil(window_us) as usize;
    Ok(FrameIter { events, t_start: header.t_start, window_us, next: 0, frame_count, cursor: 0 })
}

#[derive(Debug, Clone)]
pub struct FrameIter<'a> {
    events: &'a [Event],
    t_start: u64,
    window_us: u64,
    next: usize,
    frame_count: usize,
    cursor: usize,
}

impl<'a> Iterator for FrameIter<'a> {
    type Item = EventFrame<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.frame_count {
            return None;
        }
        let window_start = self.t_start + self.next as u64 * self.window_us;
        let window_end = window_start + self.window_us;
        let rest = &self.events[self.cursor..];
        let n = rest.partition_point(|e| e.t < window_end);
        let frame = EventFrame { index: self.next, window_start, window_end, events: &rest[..n] };
        self.cursor += n;
        self.next += 1;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.frame_count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for FrameIter<'_> {}
