//! Regenerates the bundled synthetic fixtures.
//!
//!     cargo run -p crimecast-core --example make_fixtures -- fixtures
//!
//! Everything is drawn from one ChaCha8 stream, so the output is stable.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use crimecast_core::event_signals::{hate_reported_index, write_articles_jsonl, ArticleRecord, Label};
use crimecast_core::panel::PanelDataset;
use crimecast_core::regression::{Dataset, CRIME_COVARIATES};
use crimecast_core::series::write_series_csv;
use crimecast_core::{QuarterIndex, QuarterSpan, TimeSeries};
use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STATES: [(&str, &str); 51] = [
    ("AL", "Alabama"),
    ("AK", "Alaska"),
    ("AZ", "Arizona"),
    ("AR", "Arkansas"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("DC", "District of Columbia"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("IA", "Iowa"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("ME", "Maine"),
    ("MD", "Maryland"),
    ("MA", "Massachusetts"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MS", "Mississippi"),
    ("MO", "Missouri"),
    ("MT", "Montana"),
    ("NE", "Nebraska"),
    ("NV", "Nevada"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NY", "New York State"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VT", "Vermont"),
    ("VA", "Virginia"),
    ("WA", "Washington State"),
    ("WV", "West Virginia"),
    ("WI", "Wisconsin"),
    ("WY", "Wyoming"),
];

const CITIES: &str = "\
AL Birmingham,Montgomery,Huntsville,Mobile,Tuscaloosa
AK Anchorage,Fairbanks,Juneau
AZ Phoenix,Tucson,Mesa,Chandler,Scottsdale,Flagstaff
AR Little Rock,Fayetteville,Fort Smith,Jonesboro
CA Los Angeles,San Diego,San Jose,San Francisco,Fresno,Sacramento,Oakland,Long Beach,Bakersfield,Anaheim,Riverside,Berkeley
CO Denver,Colorado Springs,Aurora,Boulder,Fort Collins
CT Hartford,New Haven,Bridgeport,Stamford,Waterbury
DE Wilmington,Dover,Newark
DC Georgetown,Anacostia
FL Miami,Orlando,Tampa,Jacksonville,Tallahassee,St Petersburg,Gainesville,Fort Lauderdale
GA Atlanta,Savannah,Augusta,Macon,Athens
HI Honolulu,Hilo
ID Boise,Idaho Falls,Pocatello
IL Chicago,Springfield,Peoria,Rockford,Naperville,Evanston
IN Indianapolis,Fort Wayne,Bloomington,South Bend,Evansville
IA Des Moines,Cedar Rapids,Iowa City,Davenport
KS Wichita,Topeka,Lawrence,Overland Park
KY Louisville,Lexington,Bowling Green,Frankfort
LA New Orleans,Baton Rouge,Shreveport,Lafayette
ME Portland,Bangor,Augusta,Lewiston
MD Baltimore,Annapolis,Rockville,Frederick
MA Boston,Cambridge,Worcester,Springfield,Lowell
MI Detroit,Grand Rapids,Ann Arbor,Lansing,Flint,Dearborn
MN Minneapolis,St Paul,Duluth,Rochester
MS Jackson,Gulfport,Hattiesburg,Biloxi
MO Kansas City,St Louis,Springfield,Columbia,Ferguson
MT Billings,Missoula,Helena,Bozeman
NE Omaha,Lincoln,Grand Island
NV Las Vegas,Reno,Henderson,Carson City
NH Manchester,Nashua,Concord
NJ Newark,Jersey City,Trenton,Paterson,Camden,Princeton
NM Albuquerque,Santa Fe,Las Cruces
NY New York,Brooklyn,Buffalo,Rochester,Albany,Syracuse,Queens,Yonkers
NC Charlotte,Raleigh,Durham,Greensboro,Asheville,Chapel Hill
ND Fargo,Bismarck,Grand Forks
OH Columbus,Cleveland,Cincinnati,Toledo,Akron,Dayton
OK Oklahoma City,Tulsa,Norman
OR Portland,Eugene,Salem,Bend
PA Philadelphia,Pittsburgh,Allentown,Harrisburg,Scranton,Erie
RI Providence,Warwick,Newport
SC Charleston,Columbia,Greenville,Myrtle Beach
SD Sioux Falls,Rapid City,Pierre
TN Nashville,Memphis,Knoxville,Chattanooga
TX Houston,Dallas,Austin,San Antonio,Fort Worth,El Paso,Arlington,Lubbock
UT Salt Lake City,Provo,Ogden
VT Burlington,Montpelier
VA Richmond,Virginia Beach,Norfolk,Charlottesville,Alexandria,Arlington
WA Seattle,Spokane,Tacoma,Olympia,Bellingham
WV Charleston,Huntington,Morgantown
WI Milwaukee,Madison,Green Bay,Kenosha
WY Cheyenne,Casper,Laramie";

/// Names that appear under more than one state; the gazetteer keeps the
/// first listed and they are avoided when writing articles.
fn city_rows() -> Vec<(String, &'static str)> {
    let mut seen = BTreeMap::new();
    let mut rows = Vec::new();
    for line in CITIES.lines() {
        let (code, names) = line.split_once(' ').unwrap();
        for name in names.split(',') {
            if seen.insert(name.to_string(), code).is_none() {
                rows.push((name.to_string(), code));
            }
        }
    }
    rows
}

fn cities_of(code: &str) -> Vec<String> {
    let all: Vec<(&str, &str)> = CITIES
        .lines()
        .flat_map(|l| {
            let (c, names) = l.split_once(' ').unwrap();
            names.split(',').map(move |n| (c, n))
        })
        .collect();
    all.iter()
        .filter(|(c, n)| *c == code && all.iter().filter(|(_, m)| m == n).count() == 1)
        .map(|(_, n)| n.to_string())
        .collect()
}

fn state_name(code: &str) -> &'static str {
    let name = STATES.iter().find(|(c, _)| *c == code).unwrap().1;
    name.strip_suffix(" State").unwrap_or(name)
}

const HATE_OPENERS: [&str; 8] = [
    "Police are investigating an assault as a hate crime",
    "A man was charged with a bias-motivated attack",
    "Vandals spray-painted swastikas and racial slurs",
    "Federal prosecutors filed hate crime charges",
    "A mosque was defaced with anti-Muslim graffiti",
    "A transgender woman was beaten while attackers shouted slurs",
    "Investigators say the victim was targeted because of his race",
    "Threatening antisemitic letters were mailed to a synagogue",
];
const OTHER_OPENERS: [&str; 8] = [
    "The city council approved a new budget",
    "Police arrested two suspects after a convenience store robbery",
    "A water main break flooded several downtown streets",
    "The school board debated a proposal to extend the school day",
    "Officers responded to a shooting outside a nightclub",
    "Residents gathered to protest a planned highway expansion",
    "A fire destroyed a warehouse early on Sunday",
    "The mayor announced a plan to hire more police officers",
];
const FILLER: [&str; 10] = [
    "Officials said the investigation is ongoing.",
    "Community leaders called for calm.",
    "No injuries were reported.",
    "A spokesperson declined to comment further.",
    "Witnesses described a chaotic scene.",
    "The police department asked anyone with information to come forward.",
    "Advocates said incidents like this are underreported.",
    "The district attorney is reviewing the case.",
    "Local groups plan a vigil on Friday.",
    "The incident was captured on a security camera.",
];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

struct Place {
    text: String,
}

/// How the place is mentioned; the mix sets resolver agreement.
fn place_for(rng: &mut ChaCha8Rng, gold: &str) -> Place {
    let cities = cities_of(gold);
    let roll: f64 = rng.random();
    let other = loop {
        let (c, _) = *STATES.choose(rng).unwrap();
        if c != gold && !cities_of(c).is_empty() {
            break c;
        }
    };
    let text = if roll < 0.45 && !cities.is_empty() {
        format!("in {}", cities.choose(rng).unwrap())
    } else if roll < 0.75 {
        format!("in {}", state_name(gold))
    } else if roll < 0.85 && !cities.is_empty() {
        format!("in {}, {}", cities.choose(rng).unwrap(), state_name(gold))
    } else if roll < 0.92 {
        // a city elsewhere plus the state name; priority picks the state
        format!("in {}, weeks after a similar case in {}", state_name(gold), cities_of(other).choose(rng).unwrap())
    } else if roll < 0.96 {
        "in a small town".to_string()
    } else {
        // misleading: only another state's city is named
        format!("near a highway rest stop, according to officials from {}", cities_of(other).choose(rng).unwrap())
    };
    Place { text }
}

fn quarter_dates(q: QuarterIndex, rng: &mut ChaCha8Rng) -> NaiveDate {
    let month = 3 * (q.quarter() as u32 - 1) + rng.random_range(1..=3u32);
    NaiveDate::from_ymd_opt(q.year(), month, rng.random_range(1..=28u32)).unwrap()
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>)) {
    let mut w = BufWriter::new(File::create(path).unwrap());
    f(&mut w);
    w.flush().unwrap();
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    fs::create_dir_all(&out).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_401);

    // gazetteer
    let mut gaz = String::from("# name\tstate\tpriority (1 institution, 2 city, 3 state name)\n");
    for (code, name) in STATES {
        gaz.push_str(&format!("{}\t{code}\t3\n", state_name(code)));
        if name.ends_with(" State") {
            gaz.push_str(&format!("{name}\t{code}\t3\n"));
        }
    }
    for (name, code) in city_rows() {
        gaz.push_str(&format!("{name}\t{code}\t2\n"));
    }
    for (inst, code) in [
        ("University of Michigan", "MI"),
        ("Ohio State University", "OH"),
        ("Penn State", "PA"),
        ("University of Texas", "TX"),
        ("UC Berkeley", "CA"),
    ] {
        gaz.push_str(&format!("{inst}\t{code}\t1\n"));
    }
    fs::write(out.join("gazetteer.tsv"), gaz).unwrap();

    // articles: the hate share per quarter follows a slow cycle
    let first = QuarterIndex::new(2007, 1).unwrap();
    let quarters: Vec<QuarterIndex> =
        QuarterSpan::new(first, QuarterIndex::new(2019, 4).unwrap()).unwrap().iter().collect();
    let share: Vec<f64> = (0..quarters.len())
        .map(|t| (0.4 + 0.2 * (t as f64 / 5.0).sin() + 0.05 * normal(&mut rng)).clamp(0.1, 0.9))
        .collect();
    let weights: Vec<(&str, u32)> = STATES
        .iter()
        .map(|(c, _)| {
            (*c, if ["CA", "NY", "TX", "FL", "IL", "PA", "OH", "MI", "GA", "WA"].contains(c) { 4 } else { 1 })
        })
        .collect();
    let total_w: u32 = weights.iter().map(|w| w.1).sum();
    let mut records = Vec::new();
    for i in 0..500 {
        let t = i * quarters.len() / 500;
        let q = quarters[t];
        let mut pick = rng.random_range(0..total_w);
        let gold_state = weights
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap()
            .0;
        let positive = rng.random::<f64>() < share[t];
        // some headlines borrow the other class's vocabulary
        let crossed = rng.random::<f64>() < 0.12;
        let opener = if positive != crossed {
            *HATE_OPENERS.choose(&mut rng).unwrap()
        } else {
            *OTHER_OPENERS.choose(&mut rng).unwrap()
        };
        let place = place_for(&mut rng, gold_state);
        let body = format!(
            "{opener} {}. {} {}",
            place.text,
            FILLER.choose(&mut rng).unwrap(),
            FILLER.choose(&mut rng).unwrap()
        );
        let title = opener.split(' ').take(6).collect::<Vec<_>>().join(" ");
        let mut rec = ArticleRecord::new(format!("a{i:04}"), quarter_dates(q, &mut rng), title, body);
        rec.gold_label = Some(Label::from_positive(positive));
        rec.gold_state = Some(gold_state.to_string());
        records.push(rec);
    }
    write_file(&out.join("articles.jsonl"), |w| write_articles_jsonl(w, &records).unwrap());

    // realized gold index per quarter drives the national series
    let mut counts = vec![(0u64, 0u64); quarters.len()];
    for r in &records {
        let t = first.quarters_until(r.quarter()) as usize;
        counts[t].0 += 1;
        counts[t].1 += u64::from(r.gold_label.unwrap().is_positive());
    }
    let index: Vec<f64> = counts.iter().map(|&(n, e)| hate_reported_index(e, n).unwrap()).collect();

    // covariates from 2006Q4 so lag-1 terms cover 2007Q1
    let cov_start = first.offset(-1);
    let cov_len = quarters.len() + 1;
    let mut cov = Dataset::new(QuarterSpan::new(cov_start, *quarters.last().unwrap()).unwrap());
    let mut cov_values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (j, (name, _)) in CRIME_COVARIATES.iter().enumerate() {
        let level = 50.0 + 10.0 * j as f64;
        let mut x = level;
        let values: Vec<f64> = (0..cov_len)
            .map(|t| {
                if *name == "population" {
                    301.0 + 0.55 * t as f64 + 0.05 * normal(&mut rng)
                } else {
                    x = level + 0.7 * (x - level) + 2.0 * normal(&mut rng);
                    x
                }
            })
            .collect();
        cov.insert(&TimeSeries::from_values(*name, cov_start, values.clone()).unwrap()).unwrap();
        cov_values.insert(name, values);
    }
    write_file(&out.join("covariates.csv"), |w| cov.write_csv(w).unwrap());

    let season = [-60.0, 45.0, 40.0, -25.0];
    let fbi: Vec<f64> = (0..quarters.len())
        .map(|t| {
            let lagged: f64 = CRIME_COVARIATES
                .iter()
                .enumerate()
                .filter(|(_, (n, _))| *n != "population")
                .map(|(j, (n, _))| (if j % 2 == 0 { 3.0 } else { -2.0 }) * cov_values[n][t])
                .sum();
            let level = 1700.0 - 4.0 * t as f64 + lagged - 0.3 * (cov_values["population"][t + 1] - 301.0);
            (level + 400.0 * index[t] + season[t % 4] + 15.0 * normal(&mut rng)).round()
        })
        .collect();
    write_file(&out.join("fbi_series.csv"), |w| {
        write_series_csv(w, &TimeSeries::from_values("fbi_num", first, fbi).unwrap()).unwrap()
    });

    // state panel with its own signal columns
    let units: Vec<&str> = STATES.iter().map(|(c, _)| *c).take(24).collect();
    let mut vars: Vec<String> = vec!["hate_crimes".into()];
    vars.extend(CRIME_COVARIATES.iter().map(|(n, _)| n.to_string()));
    vars.extend(["news_num", "event_detected_num", "hate_reported_index"].map(String::from));
    let mut panel = PanelDataset::new(vars).unwrap();
    for unit in &units {
        let effect = 30.0 * normal(&mut rng);
        let mut xs: Vec<f64> = (0..CRIME_COVARIATES.len()).map(|j| 20.0 + 5.0 * j as f64 + effect / 10.0).collect();
        let mut prev = xs.clone();
        for (t, q) in QuarterSpan::new(cov_start, *quarters.last().unwrap()).unwrap().iter().enumerate() {
            for (j, (name, _)) in CRIME_COVARIATES.iter().enumerate() {
                xs[j] = if *name == "population" {
                    5.0 + 0.01 * t as f64 + 0.02 * normal(&mut rng)
                } else {
                    let mean = 20.0 + 5.0 * j as f64 + effect / 10.0;
                    mean + 0.6 * (xs[j] - mean) + 1.5 * normal(&mut rng)
                };
            }
            let news = rng.random_range(0..12u64);
            let events = (0..news).filter(|_| rng.random::<f64>() < 0.4).count() as u64;
            let idx = hate_reported_index(events, news).unwrap();
            let lagged: f64 = CRIME_COVARIATES
                .iter()
                .enumerate()
                .filter(|(_, (n, _))| *n != "population")
                .map(|(j, _)| (if j % 3 == 0 { 0.8 } else { -0.4 }) * prev[j])
                .sum();
            let y = 120.0
                + effect
                + lagged
                + 2.0 * xs[6]
                + 1.5 * news as f64
                + 2.5 * events as f64
                + 40.0 * idx
                + 4.0 * normal(&mut rng);
            let mut row = vec![Some(y.round())];
            row.extend(xs.iter().map(|v| Some((v * 1000.0).round() / 1000.0)));
            row.extend([Some(news as f64), Some(events as f64), Some(idx)]);
            panel.insert(unit, q, row).unwrap();
            prev = xs.clone();
        }
    }
    write_file(&out.join("panel.csv"), |w| panel.write_csv(w).unwrap());
    println!("wrote fixtures to {}", out.display());
}
