//! Writes the bundled synthetic corpus and price file.
//!
//! ```text
//! cargo run -p tweetfeat-cli --example make_synthetic -- data
//! ```
//!
//! Users form four mention communities plus a small closed circle. Tweets mix
//! a handful of retail topics; a roof-fire incident spikes mid-window, and the
//! next trading day's return leans against the previous day's fire chatter.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tweetfeat::Day;

const DAYS: i64 = 60;
const COMMUNITIES: usize = 4;
const PER_COMMUNITY: usize = 45;
const CIRCLE: usize = 8;
const INCIDENT: std::ops::Range<i64> = 27..34;

const TOPICS: [&[&str]; 4] = [
    &["walmart", "store", "sale", "price", "grocery", "deal", "shop"],
    &["walmart", "roof", "fire", "solar", "panel", "tesla", "lawsuit"],
    &["walmart", "employee", "wage", "job", "strike", "store"],
    &["amazon", "delivery", "online", "price", "walmart", "deal"],
];
const FILLER: &[&str] = &["the", "a", "is", "today", "again", "so", "at", "near", "my"];

fn handle(community: usize, i: usize) -> String {
    if community == COMMUNITIES {
        format!("circle{i}")
    } else {
        format!("c{community}u{i:02}")
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20190101);
    let start = Day::from_ymd(2019, 1, 1).expect("valid date");

    let mut tweets = String::new();
    let mut fire_per_day = Vec::new();
    let mut id = 0u32;
    for d in 0..DAYS {
        let incident = INCIDENT.contains(&d);
        let count = if incident { rng.random_range(110..160) } else { rng.random_range(30..55) };
        let mut fires = 0.0;
        for _ in 0..count {
            let community = if rng.random::<f64>() < 0.06 { COMMUNITIES } else { rng.random_range(0..COMMUNITIES) };
            let size = if community == COMMUNITIES { CIRCLE } else { PER_COMMUNITY };
            let author = handle(community, rng.random_range(0..size));
            let topic = match (incident, rng.random::<f64>()) {
                (true, p) if p < 0.7 => 1,
                (false, p) if p < 0.08 => 1,
                _ => *pick(&mut rng, &[0, 0, 2, 3]),
            };
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..rng.random_range(3..7) {
                words.push(pick(&mut rng, TOPICS[topic]));
                if rng.random::<f64>() < 0.3 {
                    words.push(pick(&mut rng, FILLER));
                }
            }
            if words.contains(&"fire") {
                fires += 1.0;
            }
            let mut mentions = Vec::new();
            if rng.random::<f64>() < 0.7 {
                let target = if community < COMMUNITIES && rng.random::<f64>() < 0.04 {
                    handle(rng.random_range(0..COMMUNITIES), rng.random_range(0..PER_COMMUNITY))
                } else if rng.random::<f64>() < 0.4 {
                    handle(community, 0)
                } else {
                    handle(community, rng.random_range(0..size))
                };
                if target != author {
                    mentions.push(target);
                }
            }
            let retweet_of = (rng.random::<f64>() < 0.2).then(|| handle(community, rng.random_range(0..size.min(5))));
            let retweet_of = retweet_of.filter(|r| *r != author);
            let mut text = words.join(" ");
            for m in &mentions {
                write!(text, " @{m}").unwrap();
            }
            let hashtags: Vec<&str> = words.iter().copied().filter(|w| matches!(*w, "walmart" | "fire" | "sale")).take(1).collect();
            let record = serde_json::json!({
                "id": format!("t{id:06}"),
                "timestamp": (start.0 + d) * 86_400 + rng.random_range(0..86_400),
                "author": author,
                "text": text,
                "mentions": mentions,
                "hashtags": hashtags,
                "retweet_of": retweet_of,
            });
            id += 1;
            tweets.push_str(&record.to_string());
            tweets.push('\n');
        }
        fire_per_day.push(fires);
    }
    tweets.push_str("{\"id\": \"broken\", \"text\": \"missing fields\"}\n");
    std::fs::write(dir.join("tweets.jsonl"), tweets)?;

    let mean_fire = fire_per_day.iter().sum::<f64>() / DAYS as f64;
    let noise = Normal::new(0.0, 0.006).expect("valid normal");
    let mut prices = String::from("date,close\n");
    let mut close = 58.0f64;
    let mut prev_fire = mean_fire;
    for d in 0..DAYS {
        let day = Day(start.0 + d);
        if day.weekday() < 5 {
            let r = 0.0004 - 0.0008 * (prev_fire - mean_fire) + noise.sample(&mut rng);
            close *= 1.0 + r;
            writeln!(prices, "{day},{:.4}", close).unwrap();
        }
        prev_fire = fire_per_day[d as usize];
    }
    std::fs::write(dir.join("prices.csv"), prices)?;
    Ok(())
}
