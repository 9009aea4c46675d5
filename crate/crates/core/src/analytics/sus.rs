//! System Usability Scale scoring.
//!
//! Ten 1–5 Likert answers in questionnaire order. Odd-numbered items are
//! positively worded and contribute `answer - 1`; even-numbered items
//! contribute `5 - answer`. The sum (0–40) is scaled by 2.5 onto 0–100.

use serde::{Deserialize, Serialize};

pub const SUS_ITEMS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SusError {
    #[error("SUS response needs exactly {SUS_ITEMS} answers, got {0}")]
    WrongLength(usize),
    #[error("answer {item} is {value}; SUS answers range from 1 to 5")]
    OutOfRange { item: usize, value: i64 },
    #[error("no responses to average")]
    NoResponses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct SusResponse([u8; SUS_ITEMS]);

impl SusResponse {
    pub fn new(answers: &[i64]) -> Result<Self, SusError> {
        if answers.len() != SUS_ITEMS {
            return Err(SusError::WrongLength(answers.len()));
        }
        let mut out = [0u8; SUS_ITEMS];
        for (i, &value) in answers.iter().enumerate() {
            if !(1..=5).contains(&value) {
                return Err(SusError::OutOfRange { item: i + 1, value });
            }
            out[i] = value as u8;
        }
        Ok(SusResponse(out))
    }

    pub fn answers(&self) -> &[u8; SUS_ITEMS] {
        &self.0
    }

    /// Score in 0..=100, always a multiple of 2.5.
    pub fn score(&self) -> f64 {
        let raw: u32 = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &a)| if i % 2 == 0 { a as u32 - 1 } else { 5 - a as u32 })
            .sum();
        raw as f64 * 2.5
    }
}

impl TryFrom<Vec<i64>> for SusResponse {
    type Error = SusError;

    fn try_from(v: Vec<i64>) -> Result<Self, Self::Error> {
        SusResponse::new(&v)
    }
}

impl From<SusResponse> for Vec<i64> {
    fn from(r: SusResponse) -> Self {
        r.0.iter().map(|&a| a as i64).collect()
    }
}

pub fn sus_score(response: &SusResponse) -> f64 {
    response.score()
}

/// Arithmetic mean of individual scores.
pub fn sus_mean(responses: &[SusResponse]) -> Result<f64, SusError> {
    if responses.is_empty() {
        return Err(SusError::NoResponses);
    }
    Ok(responses.iter().map(SusResponse::score).sum::<f64>() / responses.len() as f64)
}
