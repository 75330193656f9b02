//! Tweet ingestion and tokenization.
//!
//! Two input layouts are understood, JSON Lines and CSV, both carrying the
//! columns `id, timestamp, author, text, mentions, hashtags, retweet_of`.
//! Records that cannot be read are skipped and counted rather than aborting
//! the whole load. Handles and tags are lowercased on the way in so that the
//! user graph has one vertex per account.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::day::Day;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub author: String,
    pub text: String,
    pub mentions: Vec<String>,
    pub hashtags: Vec<String>,
    pub retweet_of: Option<String>,
}

impl Tweet {
    pub fn day(&self) -> Day {
        Day::from_timestamp(self.timestamp)
    }
}

/// Tweets sorted by `(timestamp, id)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TweetCollection {
    tweets: Vec<Tweet>,
}

impl TweetCollection {
    /// Sorts and validates a set of tweets. Ids must be unique.
    pub fn new(mut tweets: Vec<Tweet>) -> Result<TweetCollection> {
        if tweets.is_empty() {
            return Err(Error::EmptyCorpus { skipped: 0 });
        }
        let mut seen = HashSet::new();
        for t in &tweets {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate tweet id `{}`", t.id)));
            }
        }
        tweets.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        Ok(TweetCollection { tweets })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// First and last calendar day (inclusive) covered by the corpus.
    pub fn date_range(&self) -> (Day, Day) {
        let first = self.tweets.first().expect("collection is never empty").day();
        let last = self.tweets.last().expect("collection is never empty").day();
        (first, last)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Clone, Debug)]
pub struct ParseOutcome {
    pub collection: TweetCollection,
    pub skipped: usize,
}

pub fn parse_tweets<R: Read>(mut input: R, format: InputFormat) -> Result<ParseOutcome> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::UnreadableInput(e.to_string()))?;

    let (records, mut skipped) = match format {
        InputFormat::Jsonl => parse_jsonl(&text),
        InputFormat::Csv => parse_csv(&text),
    };

    let mut seen = HashSet::new();
    let mut tweets = Vec::with_capacity(records.len());
    for t in records {
        if seen.insert(t.id.clone()) {
            tweets.push(t);
        } else {
            skipped += 1;
        }
    }
    if tweets.is_empty() {
        return Err(Error::EmptyCorpus { skipped });
    }
    Ok(ParseOutcome { collection: TweetCollection::new(tweets)?, skipped })
}

fn parse_jsonl(text: &str) -> (Vec<Tweet>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line).ok().and_then(|v| tweet_from_json(&v)) {
            Some(t) => out.push(t),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

fn tweet_from_json(v: &Value) -> Option<Tweet> {
    let obj = v.as_object()?;
    let id = match obj.get("id")? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let timestamp = json_timestamp(obj.get("timestamp")?)?;
    let author = obj.get("author")?.as_str()?;
    let text = obj.get("text")?.as_str()?.to_string();
    let list = |key: &str| -> Option<Vec<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Some(Vec::new()),
            Some(Value::Array(items)) => {
                items.iter().map(|i| i.as_str().map(str::to_string)).collect()
            }
            Some(_) => None,
        }
    };
    let mentions = list("mentions")?;
    let hashtags = list("hashtags")?;
    let retweet_of = match obj.get("retweet_of") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return None,
    };
    build_tweet(id, timestamp, author, text, &mentions, &hashtags, retweet_of.as_deref())
}

fn json_timestamp(v: &Value) -> Option<i64> {
    let n = v.as_number()?;
    if let Some(i) = n.as_i64() {
        return (i >= 0).then_some(i);
    }
    let f = n.as_f64()?;
    (f.is_finite() && f >= 0.0 && f < i64::MAX as f64).then(|| f.trunc() as i64)
}

fn parse_csv(text: &str) -> (Vec<Tweet>, usize) {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(_) => return (Vec::new(), 0),
    };
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let cols = [
        col("id"),
        col("timestamp"),
        col("author"),
        col("text"),
        col("mentions"),
        col("hashtags"),
        col("retweet_of"),
    ];

    let mut out = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let Ok(record) = record else {
            skipped += 1;
            continue;
        };
        let field = |i: usize| cols[i].and_then(|c| record.get(c));
        let parsed = (|| {
            let id = field(0)?.trim().to_string();
            let ts_raw = field(1)?.trim();
            let timestamp = match ts_raw.parse::<i64>() {
                Ok(i) if i >= 0 => i,
                Ok(_) => return None,
                Err(_) => {
                    let f: f64 = ts_raw.parse().ok()?;
                    if !(f.is_finite() && f >= 0.0) {
                        return None;
                    }
                    f.trunc() as i64
                }
            };
            let author = field(2)?;
            let text = field(3)?.to_string();
            let split = |s: Option<&str>| -> Vec<String> {
                s.map(|s| s.split_whitespace().map(str::to_string).collect()).unwrap_or_default()
            };
            let mentions = split(field(4));
            let hashtags = split(field(5));
            let retweet_of = field(6).map(str::trim).filter(|s| !s.is_empty());
            build_tweet(id, timestamp, author, text, &mentions, &hashtags, retweet_of)
        })();
        match parsed {
            Some(t) => out.push(t),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

fn canonical_handle(raw: &str, sigil: char) -> Option<String> {
    let h = raw.trim().trim_start_matches(sigil).to_lowercase();
    (!h.is_empty() && !h.chars().any(char::is_whitespace)).then_some(h)
}

fn build_tweet(
    id: String,
    timestamp: i64,
    author: &str,
    text: String,
    mentions: &[String],
    hashtags: &[String],
    retweet_of: Option<&str>,
) -> Option<Tweet> {
    if id.is_empty() {
        return None;
    }
    let author = canonical_handle(author, '@')?;
    let mentions = mentions.iter().map(|m| canonical_handle(m, '@')).collect::<Option<Vec<_>>>()?;
    let hashtags = hashtags.iter().map(|h| canonical_handle(h, '#')).collect::<Option<Vec<_>>>()?;
    let retweet_of = match retweet_of {
        Some(r) => Some(canonical_handle(r, '@')?),
        None => None,
    };
    Some(Tweet { id, timestamp, author, text, mentions, hashtags, retweet_of })
}

/// Canonical JSON Lines writer; one object per tweet with keys in the fixed
/// order `id,timestamp,author,text,mentions,hashtags,retweet_of`.
pub fn write_jsonl<W: Write>(collection: &TweetCollection, mut out: W) -> Result<()> {
    for t in collection.tweets() {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Keywords delimiting the domain under study.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThematicField {
    keywords: BTreeSet<String>,
}

impl ThematicField {
    /// Terms are lowercased and a leading `#` is dropped, so `#Tesla` and
    /// `tesla` name the same keyword.
    pub fn new<I, S>(terms: I) -> Result<ThematicField>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut keywords = BTreeSet::new();
        for term in terms {
            let t = term.as_ref().trim().trim_start_matches('#').to_lowercase();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidField(format!("bad term `{}`", term.as_ref())));
            }
            keywords.insert(t);
        }
        if keywords.is_empty() {
            return Err(Error::InvalidField("no keywords".into()));
        }
        Ok(ThematicField { keywords })
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn contains(&self, term: &str) -> bool {
        self.keywords.contains(term)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub stopwords: BTreeSet<String>,
    pub min_token_len: usize,
    pub strip_urls: bool,
    pub strip_mentions_from_tokens: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: BTreeSet::new(),
            min_token_len: 1,
            strip_urls: true,
            strip_mentions_from_tokens: true,
        }
    }
}

impl TokenizerConfig {
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_token_len == 0 {
            return Err(Error::InvalidArgument("min_token_len must be at least 1".into()));
        }
        Ok(())
    }
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Lowercased alphanumeric runs of the tweet text, in order, duplicates kept.
pub fn tokenize(tweet: &Tweet, cfg: &TokenizerConfig) -> Vec<String> {
    tokenize_text(&tweet.text, cfg)
}

pub fn tokenize_text(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        if cfg.strip_urls && is_url(chunk) {
            continue;
        }
        if cfg.strip_mentions_from_tokens && chunk.starts_with('@') {
            continue;
        }
        let lower = chunk.to_lowercase();
        for run in lower.split(|c: char| !c.is_alphanumeric()) {
            if run.is_empty()
                || run.chars().count() < cfg.min_token_len
                || cfg.stopwords.contains(run)
            {
                continue;
            }
            tokens.push(run.to_string());
        }
    }
    tokens
}

/// Distinct tokens that belong to the thematic field.
pub fn filter_thematic(tokens: &[String], field: &ThematicField) -> BTreeSet<String> {
    tokens.iter().filter(|t| field.contains(t)).cloned().collect()
}
