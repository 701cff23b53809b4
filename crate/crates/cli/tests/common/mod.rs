#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn business_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut day = start;
    while day <= end {
        if day.weekday().number_from_monday() <= 5 {
            out.push(day);
        }
        day += Duration::days(1);
    }
    out
}

const ISSUE_MONTHS: [u32; 8] = [1, 3, 4, 6, 7, 9, 10, 12];
const DISTRICTS: [&str; 2] = ["boston", "chicago"];

const NEGATIVE: [&str; 4] = [
    "Contacts reported that equity prices fell as credit spreads widened.",
    "Risk appetite weakened and investors moved into safe assets.",
    "Several lenders noted tighter standards amid market stress.",
    "Manufacturers cited softer orders and falling confidence.",
];
const NEUTRAL: [&str; 4] = [
    "Economic activity was little changed since the previous report.",
    "Hiring was flat and wage growth remained modest.",
    "Retail sales were steady across most categories.",
    "Lending volumes were unchanged on balance.",
];
const POSITIVE: [&str; 4] = [
    "Price pressures intensified and input costs rose sharply.",
    "Contacts expect further rate increases to weigh on asset values.",
    "Inflation expectations moved higher among businesses.",
    "Firms raised selling prices citing broad cost increases.",
];

/// Fixture data written to a fresh directory.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn data_dir(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    pub fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.data_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }
}

/// Three assets with month-level correlation regimes between stock and
/// bond, bond candidates that reproduce the bond exactly, and a corpus
/// whose wording follows the regime.
pub fn build_fixture(seed: u64, predictors: &[&str], strategies: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("raw");
    std::fs::create_dir_all(&src).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = business_days(date(2014, 6, 2), date(2024, 6, 28));
    let regimes = [-0.6, 0.0, 0.6];
    let mut regime_of = BTreeMap::new();
    let (mut s, mut b, mut g, mut c, mut one) = (100.0, 100.0, 50.0, 100.0, 100.0);
    let mut cols: BTreeMap<&str, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (i, day) in days.iter().enumerate() {
        let key = (day.year(), day.month());
        let k = *regime_of.entry(key).or_insert_with(|| rng.random_range(0..3usize));
        let rho: f64 = regimes[k];
        if i > 0 {
            let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            s *= 1.0 + 0.0003 + 0.011 * z[0];
            b *= 1.0 + 0.0001 + 0.004 * (rho * z[0] + (1.0 - rho * rho).sqrt() * z[1]);
            g *= 1.0 + 0.008 * z[2];
            c += 0.2 * z[3];
            one += 0.05 * z[4];
        }
        cols.entry("SPX").or_default().push((*day, s));
        cols.entry("gold").or_default().push((*day, g));
        cols.entry("corporate").or_default().push((*day, c));
        cols.entry("one").or_default().push((*day, one));
        // bond = 20 + 0.3 corporate + 0.5 ten
        cols.entry("ten").or_default().push((*day, (b - 20.0 - 0.3 * c) / 0.5));
        if *day >= date(2019, 1, 2) {
            cols.entry("BOND").or_default().push((*day, b));
        }
    }
    for (ticker, obs) in &cols {
        let mut text = String::from("date,close\n");
        for (d, p) in obs {
            writeln!(text, "{d},{p}").unwrap();
        }
        std::fs::write(src.join(format!("{ticker}.csv")), text).unwrap();
    }

    let mut corpus = String::new();
    for year in 2014..=2024 {
        for month in ISSUE_MONTHS {
            if (year, month) > (2024, 6) {
                continue;
            }
            let Some(&k) = regime_of.get(&(year, month)) else { continue };
            let pool = [NEGATIVE, NEUTRAL, POSITIVE][k];
            for (di, district) in DISTRICTS.iter().enumerate() {
                let text: Vec<&str> = (0..3).map(|j| pool[(j + di + month as usize) % 4]).collect();
                let line = serde_json::json!({
                    "year": year,
                    "month": month,
                    "district": district,
                    "text": format!("{} {}", text.join(" "), NEUTRAL[(year as usize + di) % 4]),
                });
                corpus.push_str(&line.to_string());
                corpus.push('\n');
            }
        }
    }
    std::fs::write(dir.path().join("corpus.jsonl"), corpus).unwrap();

    let list = |xs: &[&str]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let config = format!(
        r#"seed = 7
data_dir = "data"

[prices]
source_dir = "raw"
stock = "SPX"
bond = "BOND"
extra = ["gold"]
names = {{ SPX = "stocks", BOND = "bonds", gold = "gold" }}

[bond]
candidates = ["corporate", "one", "ten"]
start = "2014-06-02"
end = "2024-06-28"

[corpus]
path = "corpus.jsonl"

[predict]
start = "2015-01"
end = "2024-06"
predictors = [{predictors}]
concurrency = 4

[predict.remote]
max_retries = 1
backoff_ms = 1
timeout_ms = 5000

[predict.classifier]
train_start = "2015-01"
train_end = "2021-09"

[backtest]
start = "2015-03-02"
end = "2024-06-28"
strategies = [{strategies}]

[stats]
train_start = "2015-01"
train_end = "2021-09"
test_start = "2021-10"
test_end = "2024-06"
"#,
        predictors = list(predictors),
        strategies = list(strategies),
    );
    let config_path = dir.path().join("corrcast.toml");
    std::fs::write(&config_path, config).unwrap();
    Fixture { dir, config: config_path }
}

/// FNV-1a, used to derive mock replies from request bodies.
pub fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, b| (h ^ *b as u64).wrapping_mul(0x100000001b3))
}

/// A well-behaved model: reads the regime off the article wording, calls
/// gold uncorrelated with everything and answers in the prompt's scheme.
fn mock_reply(body: &[u8], h: u64) -> String {
    let text = String::from_utf8_lossy(body);
    let bins = text.contains("from 0 to 10");
    let signal = if text.contains("gold") {
        1
    } else if NEGATIVE.iter().any(|s| text.contains(s)) {
        0
    } else if POSITIVE.iter().any(|s| text.contains(s)) {
        2
    } else {
        1
    };
    if bins {
        // 2, 5 or 8, jittered by one bin
        format!("{}", 2 + 3 * signal + (h % 3) as usize - 1)
    } else {
        format!("{signal}")
    }
}

/// Chat-completions stand-in. Replies are a pure function of the request
/// body so reruns see identical answers.
pub struct MockEndpoint {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl MockEndpoint {
    pub fn start() -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/v1/chat/completions", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let (srv, counter) = (server.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                counter.fetch_add(1, Ordering::SeqCst);
                let mut body = Vec::new();
                req.as_reader().read_to_end(&mut body).unwrap();
                let h = fnv(&body);
                let reply = serde_json::json!({
                    "choices": [{
                        "message": {"role": "assistant", "content": mock_reply(&body, h)},
                        "logprobs": {"content": [{"token": "x", "logprob": -(((h >> 8) % 60) as f64) / 100.0}]}
                    }]
                });
                let resp = tiny_http::Response::from_string(reply.to_string()).with_header(
                    "Content-Type: application/json".parse::<tiny_http::Header>().unwrap(),
                );
                let _ = req.respond(resp);
            }
        });
        Self {
            url,
            hits,
            server,
            handle: Some(handle),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}


/// Runs the binary against `config`.
pub fn corrcast(config: &Path, api_url: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_corrcast"));
    cmd.arg("--config").arg(config).args(args);
    cmd.env_remove("CORRCAST_API_URL").env_remove("CORRCAST_API_KEY");
    if let Some(url) = api_url {
        cmd.env("CORRCAST_API_URL", url).env("CORRCAST_API_KEY", "test-key");
    }
    cmd.output().unwrap()
}

/// Runs a verb and panics with its stderr when it fails.
pub fn corrcast_ok(config: &Path, api_url: Option<&str>, args: &[&str]) -> String {
    let out = corrcast(config, api_url, args);
    assert!(
        out.status.success(),
        "corrcast {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub const PIPELINE: [&str; 7] = [
    "ingest",
    "reconstruct-bond",
    "realized-corr",
    "predict",
    "simulate",
    "test",
    "report",
];
