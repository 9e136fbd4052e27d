//! Access-trace ingestion.
//!
//! Every supported log format is mapped onto the canonical [`AccessRecord`]
//! stream. Parsing is line-oriented and lenient: a malformed line yields a
//! [`ParseError`] carrying its line number and the stream carries on. Only an
//! unreadable input aborts.
//!
//! Supported formats:
//!
//! * `canonical-csv`: UTF-8 CSV with the header `timestamp,consumer,object,server`
//!   and RFC-4180 quoting. The server column may be empty.
//! * `proxy-log`: whitespace-separated lines. Either the three-field form
//!   `timestamp client url`, or the Squid native access-log layout
//!   `timestamp elapsed client action/code bytes method url ...`. The server is
//!   taken from the URL host.
//! * `job-log`: CSV of `timestamp,user,file` (header optional), as produced by
//!   batch-job accounting logs.
//!
//! Timestamps are whole seconds since the epoch. A fractional part is accepted
//! and truncated. Lines that are empty or start with `#` are skipped.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header line of the canonical trace format.
pub const CANONICAL_HEADER: [&str; 4] = ["timestamp", "consumer", "object", "server"];

/// One logged data access.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccessRecord {
    pub timestamp: u64,
    pub consumer: String,
    pub object: String,
    pub server: Option<String>,
}

impl AccessRecord {
    pub fn new(timestamp: u64, consumer: impl Into<String>, object: impl Into<String>, server: Option<String>) -> Self {
        AccessRecord {
            timestamp,
            consumer: consumer.into(),
            object: object.into(),
            server: server.filter(|s| !s.is_empty()),
        }
    }
}

/// Object identity used when comparing consumers' interests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Individual pages (canonicalized URLs).
    Page,
    /// Servers (URL hosts).
    Server,
    /// Files, taken verbatim.
    File,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Page => "page",
            Granularity::Server => "server",
            Granularity::File => "file",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "page" => Ok(Granularity::Page),
            "server" => Ok(Granularity::Server),
            "file" => Ok(Granularity::File),
            other => Err(format!("unknown granularity `{other}` (expected page, server or file)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    CanonicalCsv,
    ProxyLog,
    JobLog,
}

impl TraceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceFormat::CanonicalCsv => "canonical-csv",
            TraceFormat::ProxyLog => "proxy-log",
            TraceFormat::JobLog => "job-log",
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical-csv" => Ok(TraceFormat::CanonicalCsv),
            "proxy-log" => Ok(TraceFormat::ProxyLog),
            "job-log" => Ok(TraceFormat::JobLog),
            other => Err(format!("unknown trace format `{other}` (expected canonical-csv, proxy-log or job-log)")),
        }
    }
}

/// A malformed input line.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: u64,
    pub reason: String,
}

impl ParseError {
    fn new(line: u64, reason: impl Into<String>) -> Self {
        ParseError { line, reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unreadable trace input: {0}")]
    Io(#[from] io::Error),
}

/// Parses `input` in the given format, yielding records in input order.
///
/// The returned iterator yields one item per non-blank, non-comment line
/// (headers excluded). After an I/O error it yields nothing further.
pub fn parse_trace<R: Read>(input: R, format: TraceFormat) -> TraceRecords<R> {
    let inner = match format {
        TraceFormat::CanonicalCsv | TraceFormat::JobLog => {
            let reader =
                csv::ReaderBuilder::new().has_headers(false).flexible(true).comment(Some(b'#')).from_reader(input);
            Inner::Csv { reader, record: csv::StringRecord::new(), first: true }
        }
        TraceFormat::ProxyLog => Inner::Lines { reader: BufReader::new(input), line: 0, buf: Vec::new() },
    };
    TraceRecords { format, inner, done: false }
}

/// Streaming iterator returned by [`parse_trace`].
pub struct TraceRecords<R: Read> {
    format: TraceFormat,
    inner: Inner<R>,
    done: bool,
}

enum Inner<R: Read> {
    Csv { reader: csv::Reader<R>, record: csv::StringRecord, first: bool },
    Lines { reader: BufReader<R>, line: u64, buf: Vec<u8> },
}

impl<R: Read> Iterator for TraceRecords<R> {
    type Item = Result<AccessRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let format = self.format;
        let item = match &mut self.inner {
            Inner::Csv { reader, record, first } => next_csv(format, reader, record, first),
            Inner::Lines { reader, line, buf } => next_proxy_line(reader, line, buf),
        };
        match item {
            None => {
                self.done = true;
                None
            }
            Some(Err(TraceError::Io(e))) => {
                self.done = true;
                Some(Err(TraceError::Io(e)))
            }
            Some(other) => Some(other),
        }
    }
}

fn next_csv<R: Read>(
    format: TraceFormat,
    reader: &mut csv::Reader<R>,
    record: &mut csv::StringRecord,
    first: &mut bool,
) -> Option<Result<AccessRecord, TraceError>> {
    loop {
        match reader.read_record(record) {
            Ok(false) => return None,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                if std::mem::take(first) && is_header(format, record) {
                    continue;
                }
                // A whitespace-only line reads as a single empty field.
                if record.len() == 1 && record[0].trim().is_empty() {
                    continue;
                }
                let parsed = match format {
                    TraceFormat::CanonicalCsv => canonical_row(record, line),
                    _ => job_row(record, line),
                };
                return Some(parsed.map_err(TraceError::from));
            }
            Err(e) => {
                *first = false;
                let line = e.position().map_or(0, |p| p.line());
                return Some(Err(match e.into_kind() {
                    csv::ErrorKind::Io(io) => TraceError::Io(io),
                    csv::ErrorKind::Utf8 { err, .. } => ParseError::new(line, format!("invalid UTF-8: {err}")).into(),
                    other => ParseError::new(line, format!("{other:?}")).into(),
                }));
            }
        }
    }
}

fn is_header(format: TraceFormat, record: &csv::StringRecord) -> bool {
    let expected: &[&str] = match format {
        TraceFormat::CanonicalCsv => &CANONICAL_HEADER,
        _ => &["timestamp", "user", "file"],
    };
    record.len() == expected.len() && record.iter().zip(expected).all(|(a, b)| a.trim() == *b)
}

fn canonical_row(record: &csv::StringRecord, line: u64) -> Result<AccessRecord, ParseError> {
    if record.len() != 4 {
        return Err(ParseError::new(line, format!("expected 4 fields, found {}", record.len())));
    }
    let timestamp = parse_timestamp(&record[0]).map_err(|r| ParseError::new(line, r))?;
    let consumer = non_empty(&record[1], "consumer", line)?;
    let object = non_empty(&record[2], "object", line)?;
    let server = Some(record[3].to_string()).filter(|s| !s.is_empty());
    Ok(AccessRecord { timestamp, consumer, object, server })
}

fn job_row(record: &csv::StringRecord, line: u64) -> Result<AccessRecord, ParseError> {
    if record.len() != 3 {
        return Err(ParseError::new(line, format!("expected 3 fields, found {}", record.len())));
    }
    let timestamp = parse_timestamp(&record[0]).map_err(|r| ParseError::new(line, r))?;
    let consumer = non_empty(&record[1], "user", line)?;
    let object = non_empty(&record[2], "file", line)?;
    Ok(AccessRecord { timestamp, consumer, object, server: None })
}

fn next_proxy_line<R: Read>(
    reader: &mut BufReader<R>,
    line: &mut u64,
    buf: &mut Vec<u8>,
) -> Option<Result<AccessRecord, TraceError>> {
    loop {
        buf.clear();
        match reader.read_until(b'\n', buf) {
            Ok(0) => return None,
            Ok(_) => {}
            Err(e) => return Some(Err(e.into())),
        }
        *line += 1;
        let text = match std::str::from_utf8(buf) {
            Ok(t) => t.trim(),
            Err(e) => return Some(Err(ParseError::new(*line, format!("invalid UTF-8: {e}")).into())),
        };
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        return Some(proxy_row(text, *line).map_err(TraceError::from));
    }
}

fn proxy_row(text: &str, line: u64) -> Result<AccessRecord, ParseError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let (ts, client, url) = match fields.len() {
        3 => (fields[0], fields[1], fields[2]),
        n if n >= 7 => (fields[0], fields[2], fields[6]),
        n => {
            return Err(ParseError::new(
                line,
                format!("expected 3 fields or the 7+ field access-log layout, found {n}"),
            ))
        }
    };
    let timestamp = parse_timestamp(ts).map_err(|r| ParseError::new(line, r))?;
    let server = url_host(url).map(|h| h.into_owned());
    Ok(AccessRecord { timestamp, consumer: client.to_string(), object: url.to_string(), server })
}

fn non_empty(field: &str, name: &str, line: u64) -> Result<String, ParseError> {
    if field.is_empty() {
        Err(ParseError::new(line, format!("missing {name} field")))
    } else {
        Ok(field.to_string())
    }
}

/// Parses whole epoch seconds, truncating any fractional part.
fn parse_timestamp(field: &str) -> Result<u64, String> {
    let field = field.trim();
    let (whole, frac) = match field.split_once('.') {
        Some((w, f)) => (w, Some(f)),
        None => (field, None),
    };
    if whole.starts_with('-') {
        return Err(format!("negative timestamp `{field}`"));
    }
    let valid_frac = frac.is_none_or(|f| f.bytes().all(|b| b.is_ascii_digit()));
    match whole.parse::<u64>() {
        Ok(ts) if valid_frac && !whole.starts_with('+') => Ok(ts),
        _ => Err(format!("invalid timestamp `{field}`")),
    }
}

/// Writes records in the canonical CSV format, header included.
///
/// Fields are quoted only when necessary, so parsing the output and writing it
/// again reproduces it byte for byte.
pub fn write_canonical<'a, W, I>(records: I, out: W) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AccessRecord>,
{
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let map = |e: csv::Error| io::Error::other(e.to_string());
    writer.write_record(CANONICAL_HEADER).map_err(map)?;
    for r in records {
        let ts = r.timestamp.to_string();
        let server = r.server.as_deref().unwrap_or("");
        writer.write_record([ts.as_str(), &r.consumer, &r.object, server]).map_err(map)?;
    }
    writer.flush()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("record for object `{object}` has no server and none can be derived from the object id")]
    MissingServer { object: String },
}

/// Rewrites the record's object id for the requested granularity.
///
/// * `Page`: URLs get their host lowercased, a default port (80 for http,
///   443 for https) dropped and any fragment removed. Query strings are kept.
///   Non-URL objects are left alone.
/// * `Server`: the object becomes the server id, taken from the record or
///   derived from the URL host.
/// * `File`: unchanged.
pub fn normalize_object(record: &AccessRecord, granularity: Granularity) -> Result<AccessRecord, NormalizeError> {
    let mut out = record.clone();
    match granularity {
        Granularity::Page => {
            if let Cow::Owned(s) = canonical_url(&record.object) {
                out.object = s;
            }
        }
        Granularity::Server => {
            let server = record
                .server
                .as_deref()
                .filter(|s| !s.is_empty())
                .map(|s| Cow::Owned(s.to_ascii_lowercase()))
                .or_else(|| url_host(&record.object))
                .ok_or_else(|| NormalizeError::MissingServer { object: record.object.clone() })?;
            out.object = server.into_owned();
            out.server = Some(out.object.clone());
        }
        Granularity::File => {}
    }
    Ok(out)
}

struct UrlParts<'a> {
    scheme: &'a str,
    /// Authority with any userinfo stripped.
    host_port: &'a str,
    /// Byte offset of the authority in the original string.
    authority_start: usize,
    authority_end: usize,
}

fn split_url(s: &str) -> Option<UrlParts<'_>> {
    let sep = s.find("://")?;
    let scheme = &s[..sep];
    if scheme.is_empty() || !scheme.bytes().all(|b| b.is_ascii_alphanumeric() || b"+-.".contains(&b)) {
        return None;
    }
    let authority_start = sep + 3;
    let rest = &s[authority_start..];
    let len = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let authority = &rest[..len];
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, hp)| hp);
    if host_port.is_empty() {
        return None;
    }
    Some(UrlParts { scheme, host_port, authority_start, authority_end: authority_start + len })
}

fn split_port(host_port: &str) -> (&str, Option<&str>) {
    let colon = match host_port.rfind(':') {
        Some(i) if !host_port[i..].contains(']') => i,
        _ => return (host_port, None),
    };
    (&host_port[..colon], Some(&host_port[colon + 1..]))
}

fn is_default_port(scheme: &str, port: &str) -> bool {
    port.is_empty()
        || (scheme.eq_ignore_ascii_case("http") && port == "80")
        || (scheme.eq_ignore_ascii_case("https") && port == "443")
}

/// Lowercased host of a URL (non-default port kept), or of a bare
/// `host:port` as logged for CONNECT requests.
fn url_host(s: &str) -> Option<Cow<'_, str>> {
    let host_port = match split_url(s) {
        Some(parts) => {
            let (host, port) = split_port(parts.host_port);
            match port {
                Some(p) if !is_default_port(parts.scheme, p) => parts.host_port,
                _ => host,
            }
        }
        None => {
            let (host, port) = split_port(s);
            let bare = port.is_some_and(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
            if !bare || host.is_empty() || host.contains('/') {
                return None;
            }
            host
        }
    };
    if host_port.is_empty() {
        return None;
    }
    Some(lowercase(host_port))
}

fn lowercase(s: &str) -> Cow<'_, str> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        Cow::Owned(s.to_ascii_lowercase())
    } else {
        Cow::Borrowed(s)
    }
}

fn canonical_url(s: &str) -> Cow<'_, str> {
    let Some(parts) = split_url(s) else {
        return Cow::Borrowed(s);
    };
    let (host, port) = split_port(parts.host_port);
    let keep_port = port.filter(|p| !is_default_port(parts.scheme, p));
    let userinfo_end = parts.authority_end - parts.host_port.len();

    let mut tail = &s[parts.authority_end..];
    if let Some(hash) = tail.find('#') {
        tail = &tail[..hash];
    }
    let host_lower = lowercase(host);
    let unchanged =
        matches!(host_lower, Cow::Borrowed(_)) && keep_port == port && tail.len() == s.len() - parts.authority_end;
    if unchanged {
        return Cow::Borrowed(s);
    }

    let mut out = String::with_capacity(s.len());
    out.push_str(&s[..userinfo_end.max(parts.authority_start)]);
    out.push_str(&host_lower);
    if let Some(p) = keep_port {
        out.push(':');
        out.push_str(p);
    }
    out.push_str(tail);
    Cow::Owned(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityDistribution {
    /// Objects by descending access count; ties broken by object id.
    pub ranking: Vec<(String, u64)>,
    pub total_accesses: u64,
    /// Fitted Zipf exponent (negated slope of log count against log rank over
    /// ranks with count >= 2). `None` when fewer than two ranks qualify.
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PopularityError {
    #[error("popularity analysis needs at least 2 distinct objects, found {distinct}")]
    InsufficientData { distinct: usize },
}

/// Ranks objects by access count and fits a power law to the rank/count curve.
pub fn popularity_distribution<'a, I>(records: I) -> Result<PopularityDistribution, PopularityError>
where
    I: IntoIterator<Item = &'a AccessRecord>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for r in records {
        *counts.entry(r.object.as_str()).or_default() += 1;
        total += 1;
    }
    if counts.len() < 2 {
        return Err(PopularityError::InsufficientData { distinct: counts.len() });
    }
    let mut ranking: Vec<(String, u64)> = counts.into_iter().map(|(o, c)| (o.to_string(), c)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let points: Vec<(f64, f64)> = ranking
        .iter()
        .enumerate()
        .take_while(|(_, (_, c))| *c >= 2)
        .map(|(i, (_, c))| (((i + 1) as f64).ln(), (*c as f64).ln()))
        .collect();
    let exponent = least_squares_slope(&points).map(|slope| -slope);
    Ok(PopularityDistribution { ranking, total_accesses: total, exponent })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}
