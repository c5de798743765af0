use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stimgen::{ConjunctClass, ConjunctSpec};

pub const RATINGS_HEADER: [&str; 7] = ["conjunct_id", "v1", "complement", "conj", "v2", "rating", "class"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    conjunct_id: String,
    v1: String,
    complement: String,
    conj: String,
    v2: String,
    rating: String,
    class: String,
}

/// Designed gap rate implied by a 1–7 rating: `(rating − 1) / 6`.
pub fn rating_to_p_gap(rating: f64) -> f64 {
    (rating - 1.0) / 6.0
}

/// Parses the ratings CSV. Row numbers in errors count the header as row 1.
pub fn ingest_ratings(bytes: &[u8]) -> Result<Vec<ConjunctSpec>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| LabError::Parse { row: 1, message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != RATINGS_HEADER {
        return Err(LabError::Parse {
            row: 1,
            message: format!("expected header {}", RATINGS_HEADER.join(",")),
        });
    }
    let mut specs = Vec::new();
    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| LabError::Parse { row, message: e.to_string() })?;
        let bad = |message: String| LabError::Parse { row, message };
        let rating: f64 = r
            .rating
            .trim()
            .parse()
            .map_err(|_| bad(format!("rating {:?} is not a number", r.rating)))?;
        if !(1.0..=7.0).contains(&rating) {
            return Err(bad(format!("rating {rating} outside [1, 7]")));
        }
        let class = ConjunctClass::parse(&r.class).ok_or_else(|| bad(format!("unknown class {:?}", r.class)))?;
        for (name, v) in [("conjunct_id", &r.conjunct_id), ("v1", &r.v1), ("conj", &r.conj), ("v2", &r.v2)] {
            if v.trim().is_empty() {
                return Err(bad(format!("empty {name}")));
            }
        }
        specs.push(ConjunctSpec {
            id: r.conjunct_id,
            v1: r.v1,
            complement: r.complement,
            conj: r.conj,
            v2: r.v2,
            class,
            p_gap: rating_to_p_gap(rating),
            rating: Some(rating),
        });
    }
    Ok(specs)
}

/// Writes specs in the ratings CSV schema. Specs without a rating are an
/// input error.
pub fn write_ratings(specs: &[ConjunctSpec]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RATINGS_HEADER)?;
    for s in specs {
        let rating = s
            .rating
            .ok_or_else(|| LabError::Input(format!("{} has no rating", s.id)))?;
        w.write_record([
            s.id.as_str(),
            &s.v1,
            &s.complement,
            &s.conj,
            &s.v2,
            &rating.to_string(),
            s.class.as_str(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// The bundled reference ratings table.
pub fn reference_ratings() -> Vec<ConjunctSpec> {
    ingest_ratings(include_bytes!("../../data/reference_ratings.csv")).expect("bundled ratings parse")
}
