//! Seeded stand-ins for the agricultural datasets.
//!
//! `generate_synthetic_crop` draws rows uniformly from per-crop feature
//! ranges modeled on the public crop recommendation dataset (22 crops,
//! N/P/K/temperature/humidity/pH/rainfall). `generate_synthetic_market`
//! follows the farmers' market schema: distance, nine vendor-type flags,
//! sales and visitor counts.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use super::{DataMatrix, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const CROP_FEATURES: [&str; 7] = ["N", "P", "K", "temperature", "humidity", "ph", "rainfall"];

/// `(crop, [(min, max); 7])` in `CROP_FEATURES` order.
pub const CROP_PROFILES: [(&str, [(f64, f64); 7]); 22] = [
    ("rice", [(60., 99.), (35., 60.), (35., 45.), (20.0, 26.9), (80., 85.), (5.0, 7.9), (182., 299.)]),
    ("maize", [(60., 100.), (35., 60.), (15., 25.), (18.0, 26.5), (55., 75.), (5.5, 7.0), (60., 110.)]),
    ("chickpea", [(20., 60.), (55., 80.), (75., 85.), (17.0, 21.0), (14., 20.), (6.0, 8.9), (65., 95.)]),
    ("kidneybeans", [(0., 40.), (55., 80.), (15., 25.), (15.0, 25.0), (18., 25.), (5.5, 6.0), (60., 150.)]),
    ("pigeonpeas", [(0., 40.), (55., 80.), (15., 25.), (18.0, 37.0), (30., 70.), (4.5, 7.4), (90., 199.)]),
    ("mothbeans", [(0., 40.), (35., 60.), (15., 25.), (24.0, 32.0), (40., 65.), (3.5, 9.9), (30., 75.)]),
    ("mungbean", [(0., 40.), (35., 60.), (15., 25.), (27.0, 30.0), (80., 90.), (6.2, 7.2), (36., 60.)]),
    ("blackgram", [(20., 60.), (55., 80.), (15., 25.), (25.0, 35.0), (60., 70.), (6.5, 7.8), (60., 75.)]),
    ("lentil", [(0., 40.), (55., 80.), (15., 25.), (18.0, 30.0), (60., 70.), (5.9, 7.8), (35., 55.)]),
    ("pomegranate", [(0., 40.), (5., 30.), (35., 45.), (18.0, 25.0), (85., 95.), (5.6, 7.2), (102., 113.)]),
    ("banana", [(80., 120.), (70., 95.), (45., 55.), (25.0, 30.0), (75., 85.), (5.5, 6.5), (90., 120.)]),
    ("mango", [(0., 40.), (15., 40.), (25., 35.), (27.0, 36.0), (45., 55.), (4.5, 7.0), (89., 101.)]),
    ("grapes", [(0., 40.), (120., 145.), (195., 205.), (8.8, 42.0), (80., 84.), (5.5, 6.5), (65., 75.)]),
    ("watermelon", [(80., 120.), (5., 30.), (45., 55.), (24.0, 27.0), (80., 90.), (6.0, 7.0), (40., 60.)]),
    ("muskmelon", [(80., 120.), (5., 30.), (45., 55.), (27.0, 30.0), (90., 95.), (6.0, 6.8), (20., 30.)]),
    ("apple", [(0., 40.), (120., 145.), (195., 205.), (21.0, 24.0), (90., 95.), (5.5, 6.5), (100., 125.)]),
    ("orange", [(0., 40.), (5., 30.), (5., 15.), (10.0, 35.0), (90., 95.), (6.0, 8.0), (100., 120.)]),
    ("papaya", [(31., 70.), (46., 70.), (45., 55.), (23.0, 44.0), (90., 95.), (6.5, 7.0), (40., 249.)]),
    ("coconut", [(0., 40.), (5., 30.), (25., 35.), (25.0, 30.0), (90., 100.), (5.5, 6.5), (131., 226.)]),
    ("cotton", [(100., 140.), (35., 60.), (15., 25.), (22.0, 26.0), (75., 85.), (5.8, 8.0), (60., 100.)]),
    ("jute", [(60., 100.), (35., 60.), (35., 45.), (23.0, 27.0), (70., 90.), (6.0, 7.5), (150., 200.)]),
    ("coffee", [(80., 120.), (15., 40.), (25., 35.), (23.0, 28.0), (50., 70.), (6.0, 7.5), (115., 199.)]),
];

pub const MARKET_FEATURES: [&str; 12] = [
    "miles_from_market",
    "fruits_vegetables",
    "meat_seafood",
    "dairy",
    "eggs",
    "plants_flowers",
    "nuts_legumes",
    "value_added",
    "prepared_food",
    "crafts_art_services",
    "sales",
    "visitors",
];

pub fn crop_schema() -> FeatureSchema {
    FeatureSchema::new(CROP_FEATURES, Some("label")).expect("static schema is valid")
}

pub fn market_schema() -> FeatureSchema {
    FeatureSchema::new(MARKET_FEATURES, None).expect("static schema is valid")
}

/// `rows_per_crop` rows for each of the 22 crops, grouped by crop in table order.
/// N, P and K are integers; the remaining features are rounded to 1e-6.
pub fn generate_synthetic_crop(rows_per_crop: usize, seed: u64) -> Result<DataMatrix> {
    if rows_per_crop == 0 {
        return Err(Error::invalid("rows_per_crop must be positive"));
    }
    let mut rng = seeded(seed);
    let mut values = Vec::with_capacity(rows_per_crop * CROP_PROFILES.len() * 7);
    let mut labels = Vec::with_capacity(rows_per_crop * CROP_PROFILES.len());
    for (crop, ranges) in CROP_PROFILES.iter() {
        for _ in 0..rows_per_crop {
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                let v = if j < 3 {
                    rng.random_range(lo as i64..=hi as i64) as f64
                } else {
                    (rng.random_range(lo..hi) * 1e6).round() / 1e6
                };
                values.push(v);
            }
            labels.push(crop.to_string());
        }
    }
    DataMatrix::new(crop_schema(), values, Some(labels))
}

/// `n` farmers' market vendor records.
pub fn generate_synthetic_market(n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = seeded(seed);
    let sales = LogNormal::<f64>::new(5.5, 0.8).expect("valid parameters");
    // vendor-type base rates, loosely following a typical market mix
    let rates = [0.45, 0.12, 0.08, 0.15, 0.12, 0.06, 0.25, 0.18, 0.20];
    let mut values = Vec::with_capacity(n * MARKET_FEATURES.len());
    for _ in 0..n {
        let miles = -(1.0 - rng.random::<f64>()).ln() * 25.0;
        values.push((miles * 100.0).round() / 100.0);
        for &p in &rates {
            values.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        values.push(sales.sample(&mut rng).round());
        let mean_visitors = 20.0 + 150.0 * rng.random::<f64>();
        let visitors: f64 = Poisson::new(mean_visitors).expect("positive mean").sample(&mut rng);
        values.push(visitors);
    }
    DataMatrix::new(market_schema(), values, None)
}
