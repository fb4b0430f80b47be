//! Listening-log ingestion.
//!
//! Event logs use the Last.fm-1K layout: tab-separated
//! `user, ISO-8601 timestamp, artist id, artist name, track id, track name`.
//! Two plays of the same user within the window form a triple
//! `(query = earlier artist, user, item = later artist)`. Triples are split
//! by the UTC day of their second play.
//!
//! Memory: [`ingest`] buffers the events of one contiguous run of lines
//! from the same user at a time, so peak memory is bounded by the longest
//! such run plus the vocabularies and the extracted triples. A user whose
//! lines are not contiguous is processed run by run, and no triple is
//! formed across two runs (the report counts such repeated runs).

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::DateTime;
use log::warn;

use crate::content::{FeatureCatalog, FeatureVector};
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One training or test example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub q: u32,
    pub u: u32,
    pub d: u32,
    /// Optional relevance weight.
    pub y: Option<f64>,
}

impl Triple {
    pub fn new(q: u32, u: u32, d: u32) -> Triple {
        Triple { q, u, d, y: None }
    }

    pub fn ids(&self) -> (usize, usize, usize) {
        (self.q as usize, self.u as usize, self.d as usize)
    }
}

/// A triple tagged with the UTC timestamp of its second play.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedTriple {
    pub triple: Triple,
    pub timestamp: i64,
}

impl TimedTriple {
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECONDS_PER_DAY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub user: String,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub artist: String,
    pub track: Option<String>,
    pub artist_name: Option<String>,
    pub track_name: Option<String>,
}

/// Per-line problems found while parsing an event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub lines: usize,
    pub parsed: usize,
    pub too_few_fields: usize,
    pub bad_timestamp: usize,
    pub empty_key: usize,
}

impl ParseReport {
    pub fn malformed(&self) -> usize {
        self.too_few_fields + self.bad_timestamp + self.empty_key
    }
}

#[derive(Debug)]
enum LineError {
    TooFewFields,
    BadTimestamp,
    EmptyKey,
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned)
}

fn parse_line(line: &str) -> std::result::Result<EventRecord, LineError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 4 {
        return Err(LineError::TooFewFields);
    }
    let timestamp = DateTime::parse_from_rfc3339(fields[1].trim())
        .map_err(|_| LineError::BadTimestamp)?
        .timestamp();
    let user = non_empty(Some(fields[0])).ok_or(LineError::EmptyKey)?;
    let artist_name = non_empty(Some(fields[3]));
    // Some public logs leave the artist id blank; fall back to the name.
    let artist = non_empty(Some(fields[2]))
        .or_else(|| artist_name.clone())
        .ok_or(LineError::EmptyKey)?;
    let track_name = non_empty(fields.get(5).copied());
    let track = non_empty(fields.get(4).copied()).or_else(|| track_name.clone());
    Ok(EventRecord { user, timestamp, artist, track, artist_name, track_name })
}

/// Streaming event parser; malformed lines are skipped and tallied.
pub struct EventReader<R> {
    input: R,
    buf: String,
    report: ParseReport,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(input: R) -> Self {
        EventReader { input, buf: String::new(), report: ParseReport::default() }
    }

    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    /// Next well-formed record; I/O failures are fatal.
    pub fn next_event(&mut self) -> io::Result<Option<EventRecord>> {
        loop {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            self.report.lines += 1;
            match parse_line(line) {
                Ok(rec) => {
                    self.report.parsed += 1;
                    return Ok(Some(rec));
                }
                Err(LineError::TooFewFields) => self.report.too_few_fields += 1,
                Err(LineError::BadTimestamp) => self.report.bad_timestamp += 1,
                Err(LineError::EmptyKey) => self.report.empty_key += 1,
            }
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = io::Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_event().transpose()
    }
}

/// Parses a whole event log into memory.
pub fn parse_events<R: BufRead>(input: R) -> Result<(Vec<EventRecord>, ParseReport)> {
    let mut reader = EventReader::new(input);
    let mut events = Vec::new();
    while let Some(e) = reader.next_event()? {
        events.push(e);
    }
    Ok((events, reader.report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractConfig {
    /// Largest gap between the two plays of a pair, inclusive.
    pub window_seconds: i64,
    pub keep_self_transitions: bool,
    /// Use tracks instead of artists as queries and items.
    pub track_level: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { window_seconds: 3600, keep_self_transitions: true, track_level: false }
    }
}

impl ExtractConfig {
    fn item_key<'a>(&self, e: &'a EventRecord) -> &'a str {
        if self.track_level {
            e.track.as_deref().unwrap_or(&e.artist)
        } else {
            &e.artist
        }
    }
}

/// Pairs of consecutive plays of one user, before id assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyedTriple {
    pub query: String,
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

/// Emits one triple per consecutive pair of each user's plays (sorted by
/// time, ties in input order) whose gap is within the window.
pub fn extract_triples(events: &[EventRecord], config: &ExtractConfig) -> Vec<KeyedTriple> {
    let mut by_user: Vec<(&str, Vec<&EventRecord>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for e in events {
        let slot = *index.entry(e.user.as_str()).or_insert_with(|| {
            by_user.push((e.user.as_str(), Vec::new()));
            by_user.len() - 1
        });
        by_user[slot].1.push(e);
    }
    let mut out = Vec::new();
    for (_, mut plays) in by_user {
        plays.sort_by_key(|e| e.timestamp);
        pairs_of_run(&plays, config, |a, b| {
            out.push(KeyedTriple {
                query: config.item_key(a).to_owned(),
                user: a.user.clone(),
                item: config.item_key(b).to_owned(),
                timestamp: b.timestamp,
            })
        });
    }
    out
}

fn pairs_of_run<'a>(
    sorted: &[&'a EventRecord],
    config: &ExtractConfig,
    mut emit: impl FnMut(&'a EventRecord, &'a EventRecord),
) {
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.timestamp - a.timestamp > config.window_seconds {
            continue;
        }
        if !config.keep_self_transitions && config.item_key(a) == config.item_key(b) {
            continue;
        }
        emit(a, b);
    }
}

/// Dense ids for a set of string keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyIndex {
    keys: Vec<String>,
    ids: HashMap<String, u32>,
}

impl KeyIndex {
    pub fn new() -> Self {
        KeyIndex::default()
    }

    /// Ids in first-appearance order; keys seen fewer than `min_count`
    /// times are dropped.
    pub fn from_keys<'a, I>(keys: I, min_count: usize) -> KeyIndex
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut order: Vec<&str> = Vec::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for k in keys {
            let c = counts.entry(k).or_insert(0);
            if *c == 0 {
                order.push(k);
            }
            *c += 1;
        }
        let mut index = KeyIndex::new();
        for k in order {
            if counts[k] >= min_count {
                index.intern(k);
            }
        }
        index
    }

    pub fn intern(&mut self, key: &str) -> u32 {
        if let Some(&id) = self.ids.get(key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.keys.push(key.to_owned());
        self.ids.insert(key.to_owned(), id);
        id
    }

    pub fn id(&self, key: &str) -> Option<u32> {
        self.ids.get(key).copied()
    }

    pub fn key(&self, id: u32) -> Option<&str> {
        self.keys.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    fn from_key_list(keys: Vec<String>) -> Result<KeyIndex> {
        let mut ids = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if ids.insert(k.clone(), i as u32).is_some() {
                return Err(Error::Inconsistent(format!("duplicate vocabulary key {k:?}")));
            }
        }
        Ok(KeyIndex { keys, ids })
    }
}

/// Query, user and item vocabularies. In the playlist task queries and
/// items are both artists and share one key list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub queries: KeyIndex,
    pub users: KeyIndex,
    pub items: KeyIndex,
}

impl Vocab {
    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

/// Builds the vocabulary from events in first-appearance order. Artists
/// (or tracks) played fewer than `min_count` times are dropped; queries
/// share the item vocabulary.
pub fn build_vocab(events: &[EventRecord], config: &ExtractConfig, min_count: usize) -> Vocab {
    let users = KeyIndex::from_keys(events.iter().map(|e| e.user.as_str()), 1);
    let items = KeyIndex::from_keys(events.iter().map(|e| config.item_key(e)), min_count.max(1));
    Vocab { queries: items.clone(), users, items }
}

/// Maps keyed triples onto vocabulary ids; triples with an unknown key
/// are dropped.
pub fn index_triples(triples: &[KeyedTriple], vocab: &Vocab) -> Vec<TimedTriple> {
    triples
        .iter()
        .filter_map(|t| {
            Some(TimedTriple {
                triple: Triple::new(vocab.queries.id(&t.query)?, vocab.users.id(&t.user)?, vocab.items.id(&t.item)?),
                timestamp: t.timestamp,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    pub modulus: i64,
    pub test_residue: i64,
    /// Residue class of days held out for validation; `None` disables.
    pub validation_residue: Option<i64>,
}

impl SplitConfig {
    /// Validation defaults to the residue after the test residue; a
    /// modulus below 2 leaves no room for it.
    pub fn new(modulus: i64, test_residue: i64) -> SplitConfig {
        let validation_residue = if modulus >= 2 { Some((test_residue + 1).rem_euclid(modulus)) } else { None };
        SplitConfig { modulus, test_residue, validation_residue }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modulus < 1 {
            return Err(Error::InvalidConfig("split modulus must be at least 1".into()));
        }
        if !(0..self.modulus).contains(&self.test_residue) {
            return Err(Error::InvalidConfig("test residue must lie in [0, modulus)".into()));
        }
        if let Some(v) = self.validation_residue {
            if !(0..self.modulus).contains(&v) {
                return Err(Error::InvalidConfig("validation residue must lie in [0, modulus)".into()));
            }
            if v == self.test_residue {
                return Err(Error::InvalidConfig("validation and test residues must differ".into()));
            }
        }
        Ok(())
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::new(5, 4)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<Triple>,
    pub validation: Vec<Triple>,
    pub test: Vec<Triple>,
    /// How the split was made.
    pub provenance: String,
    pub warnings: Vec<String>,
}

/// Assigns each triple to test, validation or train by the residue of
/// its UTC day number.
pub fn split_by_day(triples: &[TimedTriple], config: &SplitConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let mut split = DatasetSplit {
        provenance: format!(
            "day mod {} == {} -> test; {}; days are UTC",
            config.modulus,
            config.test_residue,
            match config.validation_residue {
                Some(v) => format!("day mod {} == {v} -> validation", config.modulus),
                None => "no validation days".to_owned(),
            }
        ),
        ..DatasetSplit::default()
    };
    for t in triples {
        let residue = t.day().rem_euclid(config.modulus);
        if residue == config.test_residue {
            split.test.push(t.triple);
        } else if Some(residue) == config.validation_residue {
            split.validation.push(t.triple);
        } else {
            split.train.push(t.triple);
        }
    }
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        if part.is_empty() && (name != "validation" || config.validation_residue.is_some()) {
            let msg = format!("{name} split is empty");
            warn!("{msg}");
            split.warnings.push(msg);
        }
    }
    Ok(split)
}

/// A split dataset with its vocabulary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub vocab: Vocab,
    pub split: DatasetSplit,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub parse: ParseReport,
    pub triples: usize,
    pub dropped_rare: usize,
    /// User runs whose user had already appeared in an earlier run.
    pub repeated_user_runs: usize,
}

/// Streams an event log into a split dataset.
///
/// Ids are assigned in first-appearance order over the log; with
/// `min_count > 1` rare items are removed afterwards and the remaining
/// ids compacted in the same order.
pub fn ingest<R: BufRead>(
    input: R,
    extract: &ExtractConfig,
    split: &SplitConfig,
    min_count: usize,
) -> Result<(Dataset, IngestReport)> {
    split.validate()?;
    let mut reader = EventReader::new(input);
    let mut users = KeyIndex::new();
    let mut items = KeyIndex::new();
    let mut item_counts: Vec<usize> = Vec::new();
    let mut timed: Vec<TimedTriple> = Vec::new();
    let mut report = IngestReport::default();

    let mut run: Vec<EventRecord> = Vec::new();
    let flush = |run: &mut Vec<EventRecord>, timed: &mut Vec<TimedTriple>, users: &mut KeyIndex, items: &mut KeyIndex| {
        if run.is_empty() {
            return;
        }
        let user = users.intern(&run[0].user);
        let mut plays: Vec<&EventRecord> = run.iter().collect();
        plays.sort_by_key(|e| e.timestamp);
        pairs_of_run(&plays, extract, |a, b| {
            let q = items.intern(extract.item_key(a));
            let d = items.intern(extract.item_key(b));
            timed.push(TimedTriple { triple: Triple::new(q, user, d), timestamp: b.timestamp });
        });
        run.clear();
    };

    let mut seen_users: HashMap<String, ()> = HashMap::new();
    while let Some(e) = reader.next_event()? {
        // item ids and counts follow event order, independent of pairing
        let id = items.intern(extract.item_key(&e)) as usize;
        if id == item_counts.len() {
            item_counts.push(0);
        }
        item_counts[id] += 1;
        if run.first().is_some_and(|r| r.user != e.user) {
            flush(&mut run, &mut timed, &mut users, &mut items);
        }
        if run.is_empty() && seen_users.insert(e.user.clone(), ()).is_some() {
            report.repeated_user_runs += 1;
        }
        run.push(e);
    }
    flush(&mut run, &mut timed, &mut users, &mut items);
    report.parse = reader.report().clone();

    let (items, timed) = if min_count > 1 {
        let mut kept = KeyIndex::new();
        let remap: Vec<Option<u32>> = items
            .keys()
            .iter()
            .zip(&item_counts)
            .map(|(k, &c)| (c >= min_count).then(|| kept.intern(k)))
            .collect();
        let before = timed.len();
        let timed: Vec<TimedTriple> = timed
            .into_iter()
            .filter_map(|mut t| {
                t.triple.q = remap[t.triple.q as usize]?;
                t.triple.d = remap[t.triple.d as usize]?;
                Some(t)
            })
            .collect();
        report.dropped_rare = before - timed.len();
        (kept, timed)
    } else {
        (items, timed)
    };
    report.triples = timed.len();
    let split = split_by_day(&timed, split)?;
    let vocab = Vocab { queries: items.clone(), users, items };
    Ok((Dataset { vocab, split }, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureNormalization {
    #[default]
    None,
    L1,
    L2,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureReport {
    pub lines: usize,
    pub loaded: usize,
    pub unknown_keys: usize,
    pub malformed: usize,
}

fn parse_feature_line(line: &str, dim: usize) -> Option<(String, FeatureVector)> {
    let mut parts = line.split_whitespace();
    let key = parts.next()?.to_owned();
    let mut entries = Vec::new();
    for tok in parts {
        let (i, v) = tok.split_once(':')?;
        entries.push((i.parse::<u32>().ok()?, v.parse::<f64>().ok()?));
    }
    entries.sort_by_key(|e| e.0);
    FeatureVector::new(dim, entries).ok().map(|fv| (key, fv))
}

/// Reads a feature file (`dim <n>` header, then `key idx:val ...` lines)
/// into a catalog keyed by `index` ids.
pub fn load_features<R: BufRead>(
    input: R,
    index: &KeyIndex,
    normalization: FeatureNormalization,
) -> Result<(FeatureCatalog, FeatureReport)> {
    let mut lines = input.lines();
    let header = loop {
        match lines.next() {
            None => return Err(Error::MalformedHeader("missing `dim <n>` header".into())),
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let dim = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["dim", n] => n.parse::<usize>().map_err(|_| Error::MalformedHeader(header.clone()))?,
        _ => return Err(Error::MalformedHeader(header.clone())),
    };
    if dim == 0 {
        return Err(Error::MalformedHeader("feature dimension must be positive".into()));
    }
    let mut catalog = FeatureCatalog::new(dim, index.len());
    let mut report = FeatureReport::default();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let Some((key, fv)) = parse_feature_line(&line, dim) else {
            report.malformed += 1;
            continue;
        };
        let Some(id) = index.id(&key) else {
            report.unknown_keys += 1;
            continue;
        };
        let fv = match normalization {
            FeatureNormalization::None => fv,
            FeatureNormalization::L1 => fv.l1_normalized(),
            FeatureNormalization::L2 => fv.l2_normalized(),
        };
        catalog.insert(id as usize, fv)?;
        report.loaded += 1;
    }
    Ok((catalog, report))
}

// Dataset cache layout, all integers little-endian:
//
//   magic "LCRD" | version u32
//   3 key tables (queries, users, items): count u32, then per key u32 byte
//     length + UTF-8 bytes
//   provenance: u32 length + UTF-8 bytes
//   3 splits (train, validation, test): count u64, has_y u8, then columns
//     q u32 x count, u u32 x count, d u32 x count, [y f64 x count]

pub const DATASET_MAGIC: &[u8; 4] = b"LCRD";
pub const DATASET_VERSION: u32 = 1;

fn eof_to_truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof { Error::Truncated } else { Error::Io(e) }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(eof_to_truncated)? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Truncated);
    }
    String::from_utf8(buf).map_err(|_| Error::Inconsistent("key is not UTF-8".into()))
}

impl Dataset {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LittleEndian>(DATASET_VERSION)?;
        for index in [&self.vocab.queries, &self.vocab.users, &self.vocab.items] {
            w.write_u32::<LittleEndian>(index.len() as u32)?;
            for k in index.keys() {
                write_str(w, k)?;
            }
        }
        write_str(w, &self.split.provenance)?;
        for part in [&self.split.train, &self.split.validation, &self.split.test] {
            w.write_u64::<LittleEndian>(part.len() as u64)?;
            let has_y = part.iter().any(|t| t.y.is_some());
            w.write_u8(has_y as u8)?;
            for t in part {
                w.write_u32::<LittleEndian>(t.q)?;
            }
            for t in part {
                w.write_u32::<LittleEndian>(t.u)?;
            }
            for t in part {
                w.write_u32::<LittleEndian>(t.d)?;
            }
            if has_y {
                for t in part {
                    w.write_f64::<LittleEndian>(t.y.unwrap_or(f64::NAN))?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof_to_truncated)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::NotADatasetFile);
        }
        let version = r.read_u32::<LittleEndian>().map_err(eof_to_truncated)?;
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: DATASET_VERSION });
        }
        let mut tables = Vec::with_capacity(3);
        for _ in 0..3 {
            let count = r.read_u32::<LittleEndian>().map_err(eof_to_truncated)? as usize;
            let mut keys = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                keys.push(read_str(r)?);
            }
            tables.push(KeyIndex::from_key_list(keys)?);
        }
        let items = tables.pop().expect("three tables");
        let users = tables.pop().expect("three tables");
        let queries = tables.pop().expect("three tables");
        let provenance = read_str(r)?;
        let mut parts = Vec::with_capacity(3);
        for _ in 0..3 {
            let count = r.read_u64::<LittleEndian>().map_err(eof_to_truncated)? as usize;
            let has_y = r.read_u8().map_err(eof_to_truncated)? != 0;
            let mut column = || -> Result<Vec<u32>> {
                let mut c = vec![0u32; count];
                r.read_u32_into::<LittleEndian>(&mut c).map_err(eof_to_truncated)?;
                Ok(c)
            };
            let (qs, us, ds) = (column()?, column()?, column()?);
            let ys = if has_y {
                let mut y = vec![0f64; count];
                r.read_f64_into::<LittleEndian>(&mut y).map_err(eof_to_truncated)?;
                Some(y)
            } else {
                None
            };
            let mut part = Vec::with_capacity(count);
            for i in 0..count {
                if qs[i] as usize >= queries.len() || us[i] as usize >= users.len() || ds[i] as usize >= items.len() {
                    return Err(Error::Inconsistent(format!("triple {i} references an id outside the vocabulary")));
                }
                let y = ys.as_ref().map(|y| y[i]).filter(|v| !v.is_nan());
                part.push(Triple { q: qs[i], u: us[i], d: ds[i], y });
            }
            parts.push(part);
        }
        let test = parts.pop().expect("three splits");
        let validation = parts.pop().expect("three splits");
        let train = parts.pop().expect("three splits");
        Ok(Dataset {
            vocab: Vocab { queries, users, items },
            split: DatasetSplit { train, validation, test, provenance, warnings: Vec::new() },
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Dataset> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        Dataset::read_from(&mut r)
    }
}
