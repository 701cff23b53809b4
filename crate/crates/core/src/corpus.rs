//! Beige Book article storage, fetching and monthly lookup.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::correlation::MonthKey;
use crate::ratelimit::RateLimiter;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub year: i32,
    pub month: u32,
    pub district: String,
    pub text: String,
}

impl ArticleRecord {
    pub fn month_key(&self) -> MonthKey {
        MonthKey {
            year: self.year,
            month: self.month,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(1..=12).contains(&self.month) {
            return Err(format!("month {} outside 1..=12", self.month));
        }
        if self.district.trim().is_empty() {
            return Err("empty district".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!(
                "empty text for {}-{:02} {}",
                self.year, self.month, self.district
            ));
        }
        Ok(())
    }
}

type ArticleKey = (MonthKey, String);

/// Articles keyed by (month, district).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: BTreeMap<ArticleKey, ArticleRecord>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = ArticleRecord>) -> Result<Self> {
        let mut corpus = Self::new();
        for r in records {
            corpus.insert(r)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, record: ArticleRecord) -> Result<()> {
        record.validate().map_err(Error::Validation)?;
        let key = (record.month_key(), record.district.clone());
        if self.records.contains_key(&key) {
            return Err(Error::Validation(format!(
                "duplicate article key ({}, {}, {})",
                record.year, record.month, record.district
            )));
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ArticleRecord> {
        self.records.values()
    }

    /// Issue months with the districts present in each.
    pub fn coverage(&self) -> BTreeMap<MonthKey, Vec<&str>> {
        let mut index: BTreeMap<MonthKey, Vec<&str>> = BTreeMap::new();
        for (m, d) in self.records.keys() {
            index.entry(*m).or_default().push(d);
        }
        index
    }

    /// Records for exactly `month`, in district order.
    pub fn articles_for_month(&self, month: MonthKey) -> Vec<&ArticleRecord> {
        let lo = (month, String::new());
        self.records
            .range(lo..)
            .take_while(|((m, _), _)| *m == month)
            .map(|(_, r)| r)
            .collect()
    }

    /// The most recent issue dated on or before `month`, with its month.
    pub fn latest_issue(&self, month: MonthKey) -> Option<(MonthKey, Vec<&ArticleRecord>)> {
        let hi = (month.next(), String::new());
        let ((issue, _), _) = self.records.range(..hi).next_back()?;
        Some((*issue, self.articles_for_month(*issue)))
    }

    /// A copy restricted to records dated on or before `month`.
    pub fn up_to(&self, month: MonthKey) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|((m, _), _)| *m <= month)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for r in self.records.values() {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn read_jsonl(reader: impl Read, path: &Path) -> Result<Self> {
        let mut corpus = Self::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ArticleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
            corpus.insert(record).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("{}:{line_no}: {m}", path.display())),
                other => other,
            })?;
        }
        Ok(corpus)
    }
}

/// All records with matching (year, month); empty for months without an issue.
pub fn articles_for_month(corpus: &Corpus, year: i32, month: u32) -> Vec<&ArticleRecord> {
    match MonthKey::new(year, month) {
        Ok(key) => corpus.articles_for_month(key),
        Err(_) => Vec::new(),
    }
}

pub fn load_corpus_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    Corpus::read_jsonl(std::fs::File::open(path)?, path)
}

/// Reduces an HTML page to plain text: drops tags, `script`/`style` bodies
/// and comments, decodes common entities and collapses whitespace.
pub fn html_to_text(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    let bytes = html.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if lower[i..].starts_with("<!--") {
                i = lower[i..].find("-->").map_or(bytes.len(), |j| i + j + 3);
                continue;
            }
            let skip_body = ["script", "style"]
                .into_iter()
                .find(|tag| {
                    lower[i + 1..].starts_with(tag)
                        && lower[i + 1 + tag.len()..]
                            .chars()
                            .next()
                            .is_some_and(|c| c == '>' || c.is_whitespace())
                });
            if let Some(tag) = skip_body {
                let close = format!("</{tag}");
                i = lower[i..].find(&close).map_or(bytes.len(), |j| i + j);
                i = lower[i..].find('>').map_or(bytes.len(), |j| i + j + 1);
                continue;
            }
            i = lower[i..].find('>').map_or(bytes.len(), |j| i + j + 1);
            out.push(' ');
            continue;
        }
        let next = lower[i..].find('<').map_or(bytes.len(), |j| i + j);
        out.push_str(&decode_entities(&html[i..next]));
        i = next;
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let semicolon = rest
            .char_indices()
            .take_while(|(i, _)| *i < 12)
            .find(|(_, c)| *c == ';')
            .map(|(i, _)| i);
        let Some(end) = semicolon else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let entity = &rest[1..end];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" | "#39" => Some('\''),
            "nbsp" => Some(' '),
            "mdash" => Some('\u{2014}'),
            "ndash" => Some('\u{2013}'),
            "rsquo" => Some('\u{2019}'),
            "lsquo" => Some('\u{2018}'),
            "rdquo" => Some('\u{201d}'),
            "ldquo" => Some('\u{201c}'),
            e if e.starts_with("#x") || e.starts_with("#X") => {
                u32::from_str_radix(&e[2..], 16).ok().and_then(char::from_u32)
            }
            e if e.starts_with('#') => e[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Where and what to fetch.
#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// URL with `{year}`, `{month}` (two digits) and `{district}` placeholders.
    pub url_template: String,
    pub years: RangeInclusive<i32>,
    pub months: Vec<u32>,
    pub districts: Vec<String>,
    /// Minimum spacing between request starts.
    pub delay: Duration,
    pub max_concurrency: usize,
}

impl FetchConfig {
    pub fn url_for(&self, year: i32, month: u32, district: &str) -> String {
        self.url_template
            .replace("{year}", &year.to_string())
            .replace("{month}", &format!("{month:02}"))
            .replace("{district}", district)
    }
}

/// Minimal blocking GET used by the fetcher.
pub trait HttpGet: Sync {
    fn get(&self, url: &str) -> std::result::Result<String, String>;
}

/// [`HttpGet`] backed by `ureq`.
pub struct UreqClient {
    agent: ureq::Agent,
}

impl UreqClient {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for UreqClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpGet for UreqClient {
    fn get(&self, url: &str) -> std::result::Result<String, String> {
        match self.agent.get(url).call() {
            Ok(resp) => resp.into_string().map_err(|e| e.to_string()),
            Err(ureq::Error::Status(code, _)) => Err(format!("HTTP {code}")),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub year: i32,
    pub month: u32,
    pub district: String,
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    pub requested: usize,
    pub succeeded: usize,
    pub failures: Vec<FetchFailure>,
}

/// One GET per (year, issue month, district); failures are collected in
/// the report and only a run with zero successes is an error.
pub fn fetch_articles(config: &FetchConfig, client: &dyn HttpGet) -> Result<(Corpus, FetchReport)> {
    let jobs: Vec<(i32, u32, &str)> = config
        .years
        .clone()
        .flat_map(|y| {
            config
                .months
                .iter()
                .flat_map(move |&m| config.districts.iter().map(move |d| (y, m, d.as_str())))
        })
        .collect();
    let limiter = RateLimiter::new(config.delay);
    let cursor = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<std::result::Result<String, String>>>> =
        Mutex::new(vec![None; jobs.len()]);
    let workers = config.max_concurrency.max(1).min(jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(&(y, m, d)) = jobs.get(i) else { break };
                limiter.acquire();
                let url = config.url_for(y, m, d);
                let outcome = client.get(&url);
                results.lock().expect("fetch results poisoned")[i] = Some(outcome);
            });
        }
    });

    let mut corpus = Corpus::new();
    let mut report = FetchReport {
        requested: jobs.len(),
        ..Default::default()
    };
    let results = results.into_inner().expect("fetch results poisoned");
    for (&(year, month, district), outcome) in jobs.iter().zip(results) {
        let url = config.url_for(year, month, district);
        let failure = |reason: String| FetchFailure {
            year,
            month,
            district: district.to_string(),
            url: url.clone(),
            reason,
        };
        match outcome.expect("every job ran") {
            Ok(body) => {
                let record = ArticleRecord {
                    year,
                    month,
                    district: district.to_string(),
                    text: html_to_text(&body),
                };
                match corpus.insert(record) {
                    Ok(()) => report.succeeded += 1,
                    Err(e) => report.failures.push(failure(e.to_string())),
                }
            }
            Err(reason) => {
                warn!("fetch {url}: {reason}");
                report.failures.push(failure(reason));
            }
        }
    }
    info!(
        "fetched {}/{} articles",
        report.succeeded, report.requested
    );
    if report.succeeded == 0 {
        return Err(Error::FetchFailed(report.failures.len()));
    }
    Ok((corpus, report))
}
